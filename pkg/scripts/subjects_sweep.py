#!/usr/bin/env python3
"""Decomposition quality versus number of subjects.

Sweeps the subject count while keeping the source structure fixed and
aggregates the reports into ``tables/subjects.csv``.  Counts below 10
are skipped: with two sharing clusters a fourth-order ring needs at
least five subjects per cluster.
"""
import argparse
import sys
from pathlib import Path

from jpjica import cli


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("experiments/subjects"))
    ap.add_argument("--seeds", type=int, default=3, help="datasets per subject count")
    ap.add_argument("--grid", type=str, default="10,12,14,16",
                    help="comma-separated subject counts (each >= 10)")
    args = ap.parse_args(argv)

    counts = [int(s) for s in args.grid.split(",")]
    low = [k for k in counts if k < 10]
    if low:
        print(f"skipping subject counts {low}: sharing clusters would be too small",
              file=sys.stderr)
        counts = [k for k in counts if k >= 10]

    reports = []
    for j, k in enumerate(counts):
        for i in range(args.seeds):
            data = args.out / f"data_k{k}_{i}"
            run = args.out / f"run_k{k}_{i}"
            steps = [
                ["simulate", "--subjects", str(k), "--joint", "3", "--pjoint", "2",
                 "--individual", "1", "--voxels", "4096", "--time", "150",
                 "--seed", str(3000 + 100 * j + i), "--out", str(data)],
                ["decompose", str(data), "--out", str(run), "--seed", str(i)],
                ["evaluate", str(run), str(data)],
            ]
            for argv_step in steps:
                code = cli.main(argv_step)
                if code != cli.EXIT_OK:
                    sys.exit(f"{argv_step[0]} failed with exit code {code}")
            reports.append(run / "report.json")

    tables = args.out / "tables"
    code = cli.main(["report", *[str(r) for r in reports], "--out", str(tables)])
    if code != cli.EXIT_OK:
        sys.exit(f"report failed with exit code {code}")
    print(f"subjects table: {tables / 'subjects.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
