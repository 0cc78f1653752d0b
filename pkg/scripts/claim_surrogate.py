#!/usr/bin/env python3
"""Run the full CLI pipeline on the quadratic benchmark, five seeds.

For each seed this drives synth -> train -> embed -> cca -> plot through
the command-line interface, then scores both embeddings with the shared
nearest-centroid evaluator and prints the comparison table the acceptance
suite checks: the autoencoder-vs-baseline accuracy margin per seed, and
whether the leading canonical correlation stays below 0.25.

Usage: python scripts/claim_surrogate.py [--workdir DIR] [--keep]
"""

import argparse
import pathlib
import shutil
import sys
import tempfile

import numpy as np

from aime.cli import main as cli
from aime.cli import read_labels
from aime.data_io import read_labeled
from aime.synth_bench import evaluate_embedding

SEEDS = (1, 2, 3, 4, 5)
MARGIN = 0.25
CORR_CAP = 0.25


def run_cli(args):
    cli([str(a) for a in args], standalone_mode=False)


def one_seed(workdir: pathlib.Path, seed: int, plot: bool) -> dict:
    prefix = workdir / f"seed{seed}"
    run_cli([
        "synth", prefix, "--n", 600, "--p", 40, "--q", 40,
        "--n-signal", 10, "--noise-sd", 0.3,
        "--design", "quadratic", "--seed", seed,
    ])
    model = workdir / f"seed{seed}_model.bin"
    run_cli([
        "train", f"{prefix}_x.tsv", f"{prefix}_y.tsv",
        "--dim", 4, "--model-out", model,
    ])
    embedding_path = workdir / f"seed{seed}_embedding.tsv"
    run_cli(["embed", model, f"{prefix}_x.tsv", embedding_path])
    run_cli([
        "cca", f"{prefix}_x.tsv", f"{prefix}_y.tsv",
        workdir / f"seed{seed}_cca", "--k", 4,
    ])
    if plot:
        run_cli([
            "plot", embedding_path, f"{prefix}_labels.tsv",
            workdir / f"seed{seed}_embedding.svg",
        ])

    by_id = read_labels(f"{prefix}_labels.tsv")
    embedding = read_labeled(embedding_path)
    labels = [by_id[s] for s in embedding.sample_ids]
    variates = read_labeled(workdir / f"seed{seed}_cca_x_variates.tsv")
    corr_lines = (
        (workdir / f"seed{seed}_cca_correlations.tsv")
        .read_text().strip().split("\n")
    )
    return {
        "auto": evaluate_embedding(embedding.values, labels),
        "cca": evaluate_embedding(variates.values, labels),
        "corr1": float(corr_lines[0].split("\t")[1]),
    }


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument(
        "--workdir", type=pathlib.Path, default=None,
        help="directory for intermediate files (default: temp, deleted)",
    )
    parser.add_argument(
        "--keep", action="store_true",
        help="keep intermediate files instead of deleting the temp dir",
    )
    opts = parser.parse_args()
    workdir = opts.workdir or pathlib.Path(tempfile.mkdtemp(prefix="surrogate_"))
    workdir.mkdir(parents=True, exist_ok=True)

    print("seed  acc(auto)  acc(cca)  margin  leading_corr")
    rows = []
    for seed in SEEDS:
        row = one_seed(workdir, seed, plot=(seed == SEEDS[0]))
        rows.append(row)
        print(
            f"{seed:>4}  {row['auto']:>9.3f}  {row['cca']:>8.3f}  "
            f"{row['auto'] - row['cca']:>+6.2f}  {row['corr1']:>12.3f}"
        )

    wins = sum(r["auto"] - r["cca"] >= MARGIN for r in rows)
    corr_ok = all(r["corr1"] < CORR_CAP for r in rows)
    print(
        f"\nmargin >= {MARGIN} in {wins}/{len(rows)} seeds (need 3); "
        f"leading correlation < {CORR_CAP} in "
        f"{'all' if corr_ok else 'NOT all'} seeds"
    )
    verdict = wins >= 3 and corr_ok
    print("outcome:", "PASS" if verdict else "FAIL")
    if opts.workdir is None and not opts.keep:
        shutil.rmtree(workdir)
    else:
        print(f"files kept under {workdir}")
    return 0 if verdict else 1


if __name__ == "__main__":
    sys.exit(main())
