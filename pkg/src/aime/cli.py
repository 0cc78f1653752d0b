"""Command line front end for the whole pipeline.

One executable with subcommands: filter, train, embed, importance, cca,
synth, plot. Options can also come from a flat key=value config file via
--config; an explicit flag always wins over the file. Output files are
written atomically (temp file in the target directory, then rename).

Exit codes: 0 success, 2 validation or usage error, 3 numerical failure.
"""

from __future__ import annotations

import functools
import os
import sys
import tempfile

import click
import numpy as np

from .aime_model import embed, fit, load_model, save_model
from .cca_baseline import DEFAULT_RIDGE_SCALE, fit_cca
from .data_io import (
    LabeledMatrix,
    align_samples,
    cv_filter,
    read_labeled,
    sd_filter,
    write_labeled,
)
from .errors import AimeError, NumericalError, ParseError, ValidationError
from .importance import permutation_importance, top_fraction
from .neural_net import TrainConfig
from .synth_bench import SynthSpec, generate

PALETTE = [
    "#e41a1c",
    "#377eb8",
    "#4daf4a",
    "#984ea3",
    "#ff7f00",
    "#a65628",
    "#f781bf",
    "#999999",
]


# ---------------------------------------------------------------- config


def parse_config(text: str) -> dict[str, str]:
    """Parse flat key=value lines; blank lines and # comments are skipped."""
    out: dict[str, str] = {}
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"config line {line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ParseError(f"config line {line_no}: empty key")
        out[key] = value.strip()
    return out


def format_config(cfg: dict[str, str]) -> str:
    """Canonical text form; parse_config(format_config(c)) == c."""
    return "".join(f"{k}={cfg[k]}\n" for k in sorted(cfg))


def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def _resolve(cfg: dict[str, str], key: str, flag, default, cast):
    """Precedence: explicit flag, then config file, then built-in default."""
    if flag is not None:
        return flag
    if key in cfg:
        try:
            return cast(cfg[key])
        except ValueError:
            raise ValidationError(
                f"config key {key}: cannot read {cfg[key]!r} as {cast.__name__}"
            ) from None
    return default


# ---------------------------------------------------------------- output


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", text=False)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_labeled(m: LabeledMatrix, path: str, delimiter: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_")
    os.close(fd)
    try:
        write_labeled(m, tmp, delimiter=delimiter)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_save_model(model, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_")
    os.close(fd)
    try:
        save_model(model, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def guarded(func):
    """Map library errors to the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)
        except AimeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    return wrapper


_in_path = click.Path(exists=True, dir_okay=False)

_delimiter_option = click.option(
    "--delimiter",
    type=click.Choice(["tab", "comma"]),
    default="tab",
    show_default=True,
    help="Field separator of input and output files.",
)
_orientation_option = click.option(
    "--orientation",
    type=click.Choice(["samples_in_rows", "features_in_rows"]),
    default="samples_in_rows",
    show_default=True,
    help="Which axis runs down the input file's rows.",
)
_config_option = click.option(
    "--config",
    "config_path",
    type=_in_path,
    default=None,
    help="Flat key=value file supplying defaults; flags override it.",
)


@click.group()
@click.version_option(package_name="aime")
def main() -> None:
    """Cross-modal embedding pipeline: filters, training, importance, CCA."""


# ---------------------------------------------------------------- filter


@main.command("filter")
@click.argument("input_path", type=_in_path)
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--cv", "use_cv", is_flag=True, help="Filter on sd/|mean|.")
@click.option("--sd", "use_sd", is_flag=True, help="Filter on standard deviation.")
@click.option(
    "--threshold",
    type=float,
    default=None,
    help="Cutoff; features strictly above it survive. [default: 0.05 for --cv, 1.25 for --sd]",
)
@_delimiter_option
@_orientation_option
@_config_option
@guarded
def cmd_filter(input_path, output_path, use_cv, use_sd, threshold, delimiter, orientation, config_path):
    """Drop low-variability features from a labeled matrix."""
    cfg = _load_config(config_path)
    if use_cv == use_sd:
        click.echo("error: pass exactly one of --cv or --sd", err=True)
        sys.exit(2)
    m = read_labeled(input_path, delimiter=delimiter, orientation=orientation)
    if use_cv:
        threshold = _resolve(cfg, "threshold", threshold, 0.05, float)
        kept = cv_filter(m, threshold)
    else:
        threshold = _resolve(cfg, "threshold", threshold, 1.25, float)
        kept = sd_filter(m, threshold)
    _atomic_write_labeled(kept, output_path, delimiter)
    click.echo(
        f"kept {kept.n_features} of {m.n_features} features "
        f"(dropped {m.n_features - kept.n_features})"
    )


# ---------------------------------------------------------------- train


@main.command("train")
@click.argument("x_path", type=_in_path)
@click.argument("y_path", type=_in_path)
@click.option("--dim", "-d", type=int, default=None, help="Embedding dimensions. [default: 4]")
@click.option("--epochs", type=int, default=None, help="Training epochs. [default: 200]")
@click.option("--seed", type=int, default=None, help="Base random seed. [default: 0]")
@click.option("--learning-rate", type=float, default=None, help="Adam step size. [default: 0.001]")
@click.option("--batch-size", type=int, default=None, help="Minibatch rows. [default: 32]")
@click.option("--model-out", required=True, type=click.Path(dir_okay=False), help="Where to write the fitted model.")
@click.option("--history-out", type=click.Path(dir_okay=False), default=None, help="Loss history file. [default: MODEL_OUT + '.history']")
@_delimiter_option
@_orientation_option
@_config_option
@guarded
def cmd_train(x_path, y_path, dim, epochs, seed, learning_rate, batch_size, model_out, history_out, delimiter, orientation, config_path):
    """Fit the embedding network on paired X and Y matrices."""
    cfg = _load_config(config_path)
    x = read_labeled(x_path, delimiter=delimiter, orientation=orientation)
    y = read_labeled(y_path, delimiter=delimiter, orientation=orientation)
    x, y = align_samples(x, y)
    config = TrainConfig(
        learning_rate=_resolve(cfg, "learning_rate", learning_rate, 1e-3, float),
        batch_size=_resolve(cfg, "batch_size", batch_size, 32, int),
        epochs=_resolve(cfg, "epochs", epochs, 200, int),
        seed=_resolve(cfg, "seed", seed, 0, int),
    )
    dim = _resolve(cfg, "d", dim, 4, int)
    model = fit(x.values, y.values, dim, config)
    _atomic_save_model(model, model_out)
    history_out = history_out or (model_out + ".history")
    _atomic_write_text(
        history_out,
        "".join(
            f"{i + 1}\t{float(loss)!r}\n"
            for i, loss in enumerate(model.loss_history)
        ),
    )
    final = model.loss_history[-1] if model.loss_history else float("nan")
    click.echo(f"trained {x.n_samples} samples, final epoch loss {final:.6f}")


# ---------------------------------------------------------------- embed


@main.command("embed")
@click.argument("model_path", type=_in_path)
@click.argument("x_path", type=_in_path)
@click.argument("output_path", type=click.Path(dir_okay=False))
@_delimiter_option
@_orientation_option
@guarded
def cmd_embed(model_path, x_path, output_path, delimiter, orientation):
    """Map samples into the trained low-dimensional space."""
    model = load_model(model_path)
    x = read_labeled(x_path, delimiter=delimiter, orientation=orientation)
    coords = embed(model, x.values)
    out = LabeledMatrix(
        coords, x.sample_ids, [f"e{i}" for i in range(coords.shape[1])]
    )
    _atomic_write_labeled(out, output_path, delimiter)
    click.echo(f"embedded {out.n_samples} samples into {out.n_features} dimensions")


# ---------------------------------------------------------------- importance


@main.command("importance")
@click.argument("model_path", type=_in_path)
@click.argument("x_path", type=_in_path)
@click.argument("output_path", type=click.Path(dir_okay=False))
@click.option("--repeats", type=int, default=None, help="Shuffles per variable. [default: 10]")
@click.option("--fraction", type=float, default=None, help="Report the top ceil(fraction * p) variables. [default: 0.01]")
@click.option("--seed", type=int, default=None, help="Base random seed. [default: 0]")
@_delimiter_option
@_orientation_option
@_config_option
@guarded
def cmd_importance(model_path, x_path, output_path, repeats, fraction, seed, delimiter, orientation, config_path):
    """Rank input variables by how much shuffling them moves the embedding."""
    cfg = _load_config(config_path)
    repeats = _resolve(cfg, "repeats", repeats, 10, int)
    fraction = _resolve(cfg, "fraction", fraction, 0.01, float)
    seed = _resolve(cfg, "seed", seed, 0, int)
    model = load_model(model_path)
    x = read_labeled(x_path, delimiter=delimiter, orientation=orientation)
    report = permutation_importance(model, x.values, repeats=repeats, seed=seed)
    chosen = top_fraction(report, fraction)
    sep = "\t" if delimiter == "tab" else ","
    lines = ["variable_id" + sep + "score" + sep + "rank\n"]
    for rank, j in enumerate(chosen, start=1):
        lines.append(
            f"{x.feature_ids[j]}{sep}{float(report.scores[j])!r}{sep}{rank}\n"
        )
    _atomic_write_text(output_path, "".join(lines))
    click.echo(f"wrote top {len(chosen)} of {report.n_variables} variables")


# ---------------------------------------------------------------- cca


@main.command("cca")
@click.argument("x_path", type=_in_path)
@click.argument("y_path", type=_in_path)
@click.argument("out_prefix")
@click.option("--k", type=int, default=None, help="Canonical pairs to extract. [default: 4]")
@click.option("--ridge", type=float, default=None, help=f"Regularization scale; 0 is plain CCA. [default: {DEFAULT_RIDGE_SCALE}]")
@_delimiter_option
@_orientation_option
@_config_option
@guarded
def cmd_cca(x_path, y_path, out_prefix, k, ridge, delimiter, orientation, config_path):
    """Fit regularized linear CCA as the comparison baseline."""
    cfg = _load_config(config_path)
    k = _resolve(cfg, "k", k, 4, int)
    ridge = _resolve(cfg, "ridge", ridge, DEFAULT_RIDGE_SCALE, float)
    x = read_labeled(x_path, delimiter=delimiter, orientation=orientation)
    y = read_labeled(y_path, delimiter=delimiter, orientation=orientation)
    x, y = align_samples(x, y)
    result = fit_cca(x.values, y.values, k, ridge=ridge)
    names = [f"cv{i}" for i in range(k)]
    _atomic_write_labeled(
        LabeledMatrix(result.x_variates, x.sample_ids, names),
        f"{out_prefix}_x_variates.tsv",
        delimiter,
    )
    _atomic_write_labeled(
        LabeledMatrix(result.y_variates, y.sample_ids, names),
        f"{out_prefix}_y_variates.tsv",
        delimiter,
    )
    sep = "\t" if delimiter == "tab" else ","
    _atomic_write_text(
        f"{out_prefix}_correlations.tsv",
        "".join(
            f"{i}{sep}{float(c)!r}\n" for i, c in enumerate(result.correlations)
        ),
    )
    top = ", ".join(f"{c:.4f}" for c in result.correlations)
    click.echo(f"canonical correlations: {top}")


# ---------------------------------------------------------------- synth


@main.command("synth")
@click.argument("out_prefix")
@click.option("--n", type=int, default=200, show_default=True, help="Samples.")
@click.option("--p", type=int, default=30, show_default=True, help="X features.")
@click.option("--q", type=int, default=30, show_default=True, help="Y features.")
@click.option("--n-signal", type=int, default=10, show_default=True, help="X features carrying signal.")
@click.option("--noise-sd", type=float, default=0.1, show_default=True, help="Noise standard deviation.")
@click.option("--design", type=click.Choice(["linear", "quadratic"]), default="linear", show_default=True, help="How Y depends on the latent factors.")
@click.option("--seed", type=int, default=0, show_default=True, help="Generator seed.")
@_delimiter_option
@guarded
def cmd_synth(out_prefix, n, p, q, n_signal, noise_sd, design, seed, delimiter):
    """Generate a paired synthetic dataset with planted latent structure."""
    spec = SynthSpec(
        n=n, p=p, q=q, n_signal=n_signal, noise_sd=noise_sd,
        design=design, seed=seed,
    )
    data = generate(spec)
    _atomic_write_labeled(data.x, f"{out_prefix}_x.tsv", delimiter)
    _atomic_write_labeled(data.y, f"{out_prefix}_y.tsv", delimiter)
    sep = "\t" if delimiter == "tab" else ","
    label_lines = ["id" + sep + "label\n"] + [
        f"{sid}{sep}{int(lab)}\n"
        for sid, lab in zip(data.x.sample_ids, data.labels)
    ]
    _atomic_write_text(f"{out_prefix}_labels.tsv", "".join(label_lines))
    _atomic_write_text(
        f"{out_prefix}_signal.txt",
        "".join(f"{j}\n" for j in data.signal_indices),
    )
    click.echo(
        f"wrote {out_prefix}_x.tsv, _y.tsv, _labels.tsv, _signal.txt "
        f"({n} samples, design {design})"
    )


# ---------------------------------------------------------------- plot


def read_labels(path: str, delimiter: str = "tab") -> dict[str, str]:
    """Read the two-column id/label sidecar written by the synth command."""
    sep = "\t" if delimiter == "tab" else ","
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line for line in handle.read().split("\n") if line]
    out: dict[str, str] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split(sep)
        if len(parts) != 2:
            raise ParseError(
                f"label file line {line_no}: expected 2 fields, got {len(parts)}"
            )
        if parts[0] in out:
            raise ValidationError(f"duplicate sample id {parts[0]!r} in labels")
        out[parts[0]] = parts[1]
    return out


def scatter_matrix_svg(coords: np.ndarray, labels: list[str]) -> str:
    """Render a d-by-d panel grid as SVG 1.1 text.

    Off-diagonal panel (i, j) scatters dimension j against dimension i with
    one circle per sample; diagonal panels show each sample as a tick on
    that dimension's axis. Colors come from a fixed palette keyed by the
    sorted unique labels, so output is deterministic.
    """
    n, d = coords.shape
    classes = sorted(set(labels))
    color = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(classes)}

    panel, pad, gap = 150.0, 40.0, 12.0
    lows = coords.min(axis=0)
    spans = coords.max(axis=0) - lows
    spans[spans == 0] = 1.0

    def sx(value, dim):
        return 6.0 + 138.0 * (value - lows[dim]) / spans[dim]

    size = pad * 2 + panel * d + gap * (d - 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size:.0f}" height="{size + 24:.0f}" '
        f'viewBox="0 0 {size:.0f} {size + 24:.0f}">',
        f'<rect width="{size:.0f}" height="{size + 24:.0f}" fill="white"/>',
    ]
    for i in range(d):
        for j in range(d):
            ox = pad + j * (panel + gap)
            oy = pad + i * (panel + gap)
            parts.append(f'<g transform="translate({ox:.1f},{oy:.1f})">')
            parts.append(
                '<rect x="0" y="0" width="150" height="150" '
                'fill="none" stroke="#333333" stroke-width="1"/>'
            )
            if i == j:
                for row in range(n):
                    x = sx(coords[row, i], i)
                    parts.append(
                        f'<line x1="{x:.2f}" y1="60" x2="{x:.2f}" y2="90" '
                        f'stroke="{color[labels[row]]}" stroke-width="1"/>'
                    )
            else:
                for row in range(n):
                    x = sx(coords[row, j], j)
                    y = 150.0 - sx(coords[row, i], i)
                    parts.append(
                        f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" '
                        f'fill="{color[labels[row]]}" fill-opacity="0.7"/>'
                    )
            parts.append("</g>")
    for idx, c in enumerate(classes):
        lx = pad + idx * 110.0
        ly = size + 4.0
        parts.append(
            f'<rect x="{lx:.1f}" y="{ly:.1f}" width="12" height="12" '
            f'fill="{color[c]}"/>'
        )
        parts.append(
            f'<text x="{lx + 16.0:.1f}" y="{ly + 11.0:.1f}" '
            f'font-family="sans-serif" font-size="12">{c}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@main.command("plot")
@click.argument("embedding_path", type=_in_path)
@click.argument("labels_path", type=_in_path)
@click.argument("output_path", type=click.Path(dir_okay=False))
@_delimiter_option
@guarded
def cmd_plot(embedding_path, labels_path, output_path, delimiter):
    """Draw the embedding as a colored scatter-matrix SVG."""
    emb = read_labeled(embedding_path, delimiter=delimiter)
    by_id = read_labels(labels_path, delimiter=delimiter)
    missing = [s for s in emb.sample_ids if s not in by_id]
    if missing:
        raise ValidationError(
            f"{len(missing)} embedded sample(s) have no label, "
            f"first: {missing[0]!r}"
        )
    labels = [by_id[s] for s in emb.sample_ids]
    _atomic_write_text(output_path, scatter_matrix_svg(emb.values, labels))
    click.echo(
        f"plotted {emb.n_samples} samples, {emb.n_features}x{emb.n_features} panels"
    )


if __name__ == "__main__":
    main()
