#!/usr/bin/env python3
"""Full sample-size x TP-rate x epochs x initialisation grid on a CSV dataset.

Prints one block per sample size with mean test accuracy and F1 for every
(initialisation, TP rate, epochs) combination, and writes the raw per-run
results plus the paired seeded-vs-random report.

    python scripts/summary_grid.py --data songs.csv --profile profile.json \
        --features danceability,energy,... --out results/
"""

from __future__ import annotations

import argparse
import os
from pathlib import Path

from humanseed.dataset import FeatureSchema, load_csv
from humanseed.harness import (
    GridConfig,
    run_grid,
    seeded_vs_random_report,
    summary_table_rows,
    write_report_csv,
    write_results_csv,
)
from humanseed.rank_aggregation import load_profile


def parse_args() -> argparse.Namespace:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--profile", type=Path, required=True)
    p.add_argument("--features", help="comma-separated feature columns (default: the profile's)")
    p.add_argument("--label", default="label")
    p.add_argument("--model", choices=["mlp", "svm"], default="mlp")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", type=Path, required=True)
    return p.parse_args()


def main() -> None:
    args = parse_args()
    profile = load_profile(args.profile)
    names = tuple(args.features.split(",")) if args.features else profile.feature_names
    ds = load_csv(args.data, FeatureSchema(names, args.label))
    cfg = GridConfig(repetitions=args.reps, base_seed=args.seed, model=args.model)
    result = run_grid(cfg, ds, profile, jobs=args.jobs)

    args.out.mkdir(parents=True, exist_ok=True)
    write_results_csv(result, args.out / "results.csv")
    write_report_csv(seeded_vs_random_report(result), args.out / "report.csv")

    current = None
    for size, agg, tp, epochs, acc, f1 in summary_table_rows(result):
        if size != current:
            current = size
            print(f"\nsample size {size}")
            print(f"{'init':>13} {'tp':>4} {'epochs':>6} {'accuracy':>9} {'f1':>7}")
        print(f"{agg:>13} {tp:>4.1f} {epochs:>6} {acc:>9.4f} {f1:>7.4f}")
    if result.skipped:
        print(f"\n{len(result.skipped)} cells skipped; see the status column of results.csv")


if __name__ == "__main__":
    main()
