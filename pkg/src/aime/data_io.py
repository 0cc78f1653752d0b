"""Labeled matrix files, paired-sample alignment, and variance-based feature filters.

File format: delimited text with feature names in the header row and sample
names in the first column (or the transpose, when ``orientation`` says the
features run down the rows). Values are written in shortest round-trippable
decimal form, so a write/read cycle reproduces the floats bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    DomainError,
    InsufficientDataError,
    ParseError,
    ValidationError,
)
from .matrix_core import as_matrix, column_stats

_DELIMITERS = {"tab": "\t", "comma": ","}
_ORIENTATIONS = ("samples_in_rows", "features_in_rows")

# Mean magnitudes below this make a coefficient of variation meaningless.
NEAR_ZERO_MEAN = 1e-12


@dataclass
class LabeledMatrix:
    """A samples-by-features matrix with unique string labels on both axes."""

    values: np.ndarray
    sample_ids: list[str]
    feature_ids: list[str]

    def __post_init__(self) -> None:
        self.values = as_matrix(self.values)
        self.sample_ids = [str(s) for s in self.sample_ids]
        self.feature_ids = [str(f) for f in self.feature_ids]
        n, p = self.values.shape
        if len(self.sample_ids) != n:
            raise ValidationError(
                f"{len(self.sample_ids)} sample ids for {n} rows"
            )
        if len(self.feature_ids) != p:
            raise ValidationError(
                f"{len(self.feature_ids)} feature ids for {p} columns"
            )
        for kind, ids in (("sample", self.sample_ids), ("feature", self.feature_ids)):
            if len(set(ids)) != len(ids):
                dup = _first_duplicate(ids)
                raise ValidationError(f"duplicate {kind} id {dup!r}")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def select_features(self, indices: list[int]) -> "LabeledMatrix":
        """New matrix keeping the given feature columns, order preserved."""
        return LabeledMatrix(
            self.values[:, indices],
            list(self.sample_ids),
            [self.feature_ids[j] for j in indices],
        )


def _first_duplicate(ids: list[str]) -> str:
    seen: set[str] = set()
    for item in ids:
        if item in seen:
            return item
        seen.add(item)
    raise ValueError("no duplicate present")


def _parse_cell(text: str, line_no: int, col_no: int) -> float:
    cleaned = text.strip()
    # Underscores are legal in Python float literals but not in data files.
    if not cleaned or "_" in cleaned:
        raise ParseError(
            f"line {line_no}, column {col_no}: non-numeric cell {text!r}"
        )
    try:
        value = float(cleaned)
    except ValueError:
        raise ParseError(
            f"line {line_no}, column {col_no}: non-numeric cell {text!r}"
        ) from None
    if not math.isfinite(value):
        raise ParseError(
            f"line {line_no}, column {col_no}: non-finite cell {text!r}"
        )
    return value


def read_labeled(
    path,
    delimiter: str = "tab",
    orientation: str = "samples_in_rows",
) -> LabeledMatrix:
    """Read a labeled matrix from a delimited text file.

    The header row carries column labels and every following row starts with
    its own label. ``orientation`` names what the file's rows are; the result
    always comes back samples-in-rows. Ragged or non-numeric content raises
    ParseError pointing at the offending line and column (both 1-based).
    """
    sep = _delimiter_char(delimiter)
    if orientation not in _ORIENTATIONS:
        raise DomainError(f"unknown orientation {orientation!r}")

    with open(path, "r", encoding="utf-8", newline="") as handle:
        lines = handle.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2:
        raise ParseError(f"{path}: need a header row and at least one data row")

    header = lines[0].split(sep)
    col_labels = [c.strip() for c in header[1:]]
    if not col_labels:
        raise ParseError("line 1: header has no column labels")
    width = len(header)

    row_labels: list[str] = []
    rows: list[list[float]] = []
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split(sep)
        if len(fields) != width:
            raise ParseError(
                f"line {line_no} has {len(fields)} fields, expected {width}"
            )
        row_labels.append(fields[0].strip())
        rows.append(
            [
                _parse_cell(text, line_no, col_no)
                for col_no, text in enumerate(fields[1:], start=2)
            ]
        )

    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(col_labels))
    if orientation == "features_in_rows":
        values = values.T.copy()
        sample_ids, feature_ids = col_labels, row_labels
    else:
        sample_ids, feature_ids = row_labels, col_labels
    try:
        return LabeledMatrix(values, sample_ids, feature_ids)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_labeled(
    m: LabeledMatrix,
    path,
    delimiter: str = "tab",
    orientation: str = "samples_in_rows",
) -> None:
    """Write a labeled matrix as delimited text with unix newlines.

    Values use repr's shortest round-trippable decimal form; reading the file
    back yields bitwise-identical floats.
    """
    sep = _delimiter_char(delimiter)
    if orientation not in _ORIENTATIONS:
        raise DomainError(f"unknown orientation {orientation!r}")

    if orientation == "samples_in_rows":
        grid, row_ids, col_ids = m.values, m.sample_ids, m.feature_ids
    else:
        grid, row_ids, col_ids = m.values.T, m.feature_ids, m.sample_ids

    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("id" + sep + sep.join(col_ids) + "\n")
        for label, row in zip(row_ids, grid):
            handle.write(
                label + sep + sep.join(repr(float(v)) for v in row) + "\n"
            )


def _delimiter_char(delimiter: str) -> str:
    try:
        return _DELIMITERS[delimiter]
    except KeyError:
        raise DomainError(
            f"unknown delimiter {delimiter!r}; expected 'tab' or 'comma'"
        ) from None


def align_samples(
    a: LabeledMatrix, b: LabeledMatrix
) -> tuple[LabeledMatrix, LabeledMatrix]:
    """Restrict both matrices to their shared samples, in a's original order.

    Raises AlignmentError when the id sets do not intersect, quoting a few ids
    from each side so the mismatch is visible in the message.
    """
    in_b = set(b.sample_ids)
    shared = [s for s in a.sample_ids if s in in_b]
    if not shared:
        raise AlignmentError(
            "no shared sample ids; first side has "
            f"{a.sample_ids[:3]}, second side has {b.sample_ids[:3]}"
        )
    b_pos = {s: i for i, s in enumerate(b.sample_ids)}
    a_rows = [a.sample_ids.index(s) for s in shared]
    b_rows = [b_pos[s] for s in shared]
    a_out = LabeledMatrix(a.values[a_rows], shared, list(a.feature_ids))
    b_out = LabeledMatrix(b.values[b_rows], shared, list(b.feature_ids))
    return a_out, b_out


def cv_filter(m: LabeledMatrix, threshold: float) -> LabeledMatrix:
    """Keep features whose coefficient of variation sd/|mean| exceeds threshold.

    Features whose mean is within NEAR_ZERO_MEAN of zero have no meaningful
    CV; they are dropped and counted in a warning.
    """
    means, sds = _feature_stats(m)
    kept: list[int] = []
    near_zero = 0
    for j in range(m.n_features):
        if abs(means[j]) < NEAR_ZERO_MEAN:
            near_zero += 1
            continue
        if sds[j] / abs(means[j]) > threshold:
            kept.append(j)
    if near_zero:
        warnings.warn(
            f"cv_filter dropped {near_zero} feature(s) with near-zero mean",
            stacklevel=2,
        )
    return _warn_if_empty(m.select_features(kept), "cv_filter")


def sd_filter(m: LabeledMatrix, threshold: float) -> LabeledMatrix:
    """Keep features whose sample standard deviation exceeds threshold."""
    _, sds = _feature_stats(m)
    kept = [j for j in range(m.n_features) if sds[j] > threshold]
    return _warn_if_empty(m.select_features(kept), "sd_filter")


def _feature_stats(m: LabeledMatrix) -> tuple[np.ndarray, np.ndarray]:
    if m.n_samples < 2:
        raise InsufficientDataError(
            f"need at least 2 samples to filter, got {m.n_samples}"
        )
    return column_stats(m.values)


def _warn_if_empty(result: LabeledMatrix, name: str) -> LabeledMatrix:
    if result.n_features == 0:
        warnings.warn(f"{name} removed every feature", stacklevel=3)
    return result
