#!/usr/bin/env python3
"""Decomposition quality versus number of outer sweeps.

Simulates a handful of two-cluster datasets once, then decomposes each
with an increasing outer-sweep budget and aggregates the evaluation
reports into ``tables/convergence.csv`` (one row per budget).
"""
import argparse
import sys
from pathlib import Path

from jpjica import cli


def run_once(dataset: Path, out: Path, max_iter: int, seed: int) -> Path:
    code = cli.main([
        "decompose", str(dataset), "--out", str(out),
        "--max-iter", str(max_iter), "--seed", str(seed),
    ])
    if code != cli.EXIT_OK:
        sys.exit(f"decompose failed with exit code {code}")
    code = cli.main(["evaluate", str(out), str(dataset)])
    if code != cli.EXIT_OK:
        sys.exit(f"evaluate failed with exit code {code}")
    return out / "report.json"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("experiments/convergence"))
    ap.add_argument("--seeds", type=int, default=3, help="datasets per budget")
    ap.add_argument("--sweeps", type=str, default="1,2,3,4,5,6,8,10",
                    help="comma-separated outer-sweep budgets")
    args = ap.parse_args(argv)

    budgets = [int(s) for s in args.sweeps.split(",")]
    datasets = []
    for i in range(args.seeds):
        d = args.out / f"data_{i}"
        code = cli.main([
            "simulate", "--subjects", "10", "--joint", "3", "--pjoint", "2",
            "--individual", "1", "--voxels", "4096", "--time", "150",
            "--seed", str(1000 + i), "--out", str(d),
        ])
        if code != cli.EXIT_OK:
            sys.exit(f"simulate failed with exit code {code}")
        datasets.append(d)

    reports = []
    for budget in budgets:
        for i, d in enumerate(datasets):
            run_dir = args.out / f"run_m{budget}_s{i}"
            reports.append(run_once(d, run_dir, budget, 1000 + i))

    tables = args.out / "tables"
    code = cli.main(["report", *[str(r) for r in reports], "--out", str(tables)])
    if code != cli.EXIT_OK:
        sys.exit(f"report failed with exit code {code}")
    print(f"convergence table: {tables / 'convergence.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
