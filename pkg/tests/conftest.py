import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def scorecard():
    """Collect one PASS/FAIL line per acceptance criterion.

    Lines are also replayed after the run (pytest_terminal_summary) so the
    scorecard is visible even when pytest swallows per-test stdout.
    """

    def record(label, ok, detail):
        line = f"CRITERION {label}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance scorecard")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
