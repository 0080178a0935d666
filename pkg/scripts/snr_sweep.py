#!/usr/bin/env python3
"""Decomposition quality versus observation noise level.

Runs the default two-cluster scenario across an SNR grid (plus a clean
arm) and aggregates the reports into ``tables/snr.csv``.  The clean arm
shows up in the table under the key ``inf``.
"""
import argparse
import sys
from pathlib import Path

from jpjica import cli


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("experiments/snr"))
    ap.add_argument("--seeds", type=int, default=3, help="datasets per noise level")
    ap.add_argument("--grid", type=str, default="-3,0,3,6,12",
                    help="comma-separated SNR values in dB; clean arm is always added")
    args = ap.parse_args(argv)

    levels: list[float | None] = [float(s) for s in args.grid.split(",")]
    levels.append(None)

    reports = []
    for j, snr in enumerate(levels):
        tag = "clean" if snr is None else f"{snr:g}db"
        for i in range(args.seeds):
            data = args.out / f"data_{tag}_{i}"
            sim = [
                "simulate", "--subjects", "10", "--joint", "3", "--pjoint", "2",
                "--individual", "1", "--voxels", "4096", "--time", "150",
                "--seed", str(2000 + 100 * j + i), "--out", str(data),
            ]
            if snr is not None:
                sim += ["--snr-db", str(snr)]
            run = args.out / f"run_{tag}_{i}"
            for argv_step in (
                sim,
                ["decompose", str(data), "--out", str(run), "--seed", str(i)],
                ["evaluate", str(run), str(data)],
            ):
                code = cli.main(argv_step)
                if code != cli.EXIT_OK:
                    sys.exit(f"{argv_step[0]} failed with exit code {code}")
            reports.append(run / "report.json")

    tables = args.out / "tables"
    code = cli.main(["report", *[str(r) for r in reports], "--out", str(tables)])
    if code != cli.EXIT_OK:
        sys.exit(f"report failed with exit code {code}")
    print(f"snr table: {tables / 'snr.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
