"""Command-line interface: simulate, decompose, evaluate, report.

Exit codes: 0 success, 2 invalid simulation scenario, 3 invalid input
to decomposition, 4 missing ground truth during evaluation, 5 no usable
inputs for report aggregation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import io as jio
from .baseline import run_ji_thica
from .classify import label_decomposition
from .engine import run_jpji_ica
from .errors import JpjicaError
from .metrics import acc_counts_run, acc_peer_sets_run, jsir, match_sources
from .simulate import ScenarioSpec, generate_dataset
from .types import AlgoConfig

EXIT_OK = 0
EXIT_BAD_SCENARIO = 2
EXIT_BAD_INPUT = 3
EXIT_NO_TRUTH = 4
EXIT_NO_REPORTS = 5


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        threads = _resolve_threads(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    del threads  # validated upper bound; current implementation is single-threaded
    return args.func(args)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jpjica",
        description="Joint / partially joint / individual source separation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a synthetic dataset")
    p_sim.add_argument("--subjects", type=int, default=10)
    p_sim.add_argument("--joint", type=int, default=3)
    p_sim.add_argument("--pjoint", type=str, default="0",
                       help="count, or comma-separated per-subject counts")
    p_sim.add_argument("--individual", type=str, default="0",
                       help="count, or comma-separated per-subject counts")
    p_sim.add_argument("--clusters", type=int, default=2)
    p_sim.add_argument("--voxels", type=int, default=4096)
    p_sim.add_argument("--time", type=str, default="150",
                       help="time points, or comma-separated per-subject counts")
    p_sim.add_argument("--snr-db", type=float, default=None)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--allow-small-clusters", action="store_true")
    p_sim.add_argument("--binary", action="store_true",
                       help="store matrices in the binary format")
    p_sim.add_argument("--out", required=True)
    _common_flags(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_dec = sub.add_parser("decompose", help="run a decomposition on a dataset directory")
    p_dec.add_argument("input", help="dataset directory (manifest.json inside)")
    p_dec.add_argument("--out", required=True)
    p_dec.add_argument("--algorithm", choices=("jpji", "jithica"), default="jpji")
    p_dec.add_argument("--components", type=str, default="min",
                       help="'auto' (per-subject), 'min' (shared minimum) or an integer")
    p_dec.add_argument("--weights", type=str, default="0.5,0.75,1.0")
    p_dec.add_argument("--max-iter", type=int, default=5)
    p_dec.add_argument("--eps0", type=float, default=1e-6)
    p_dec.add_argument("--sigma0", type=str, default="auto")
    p_dec.add_argument("--tau-joint", type=float, default=0.15)
    p_dec.add_argument("--n-clusters", type=int, default=None)
    p_dec.add_argument("--estimator", choices=("sample-cumulant", "per-voxel"),
                       default="sample-cumulant")
    p_dec.add_argument("--seed", type=int, default=0)
    p_dec.add_argument("--binary", action="store_true")
    _common_flags(p_dec)
    p_dec.set_defaults(func=cmd_decompose)

    p_eval = sub.add_parser("evaluate", help="score results against ground truth")
    p_eval.add_argument("results", help="results directory")
    p_eval.add_argument("dataset", help="dataset directory with ground truth")
    p_eval.add_argument("--out", default=None, help="report path (default results/report.json)")
    _common_flags(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_rep = sub.add_parser("report", help="aggregate report files into CSV tables")
    p_rep.add_argument("reports", nargs="*", help="report.json files")
    p_rep.add_argument("--out", required=True, help="output directory for tables")
    _common_flags(p_rep)
    p_rep.set_defaults(func=cmd_report)
    return parser


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help="upper bound on worker threads (default: JPJI_THREADS or 1);"
                        " results are identical for any value")


def _resolve_threads(args: argparse.Namespace) -> int:
    raw = args.threads
    if raw is None:
        raw = os.environ.get("JPJI_THREADS", "1")
    threads = int(raw)
    if threads < 1:
        raise ValueError(f"--threads must be >= 1, got {threads}")
    return threads


def _int_or_list(text: str) -> int | tuple[int, ...]:
    parts = [p for p in text.split(",") if p.strip() != ""]
    if len(parts) == 1:
        return int(parts[0])
    return tuple(int(p) for p in parts)


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        spec = ScenarioSpec(
            n_subjects=args.subjects,
            n_joint=args.joint,
            n_pjoint=_int_or_list(args.pjoint),
            n_individual=_int_or_list(args.individual),
            n_clusters=args.clusters,
            n_voxels=args.voxels,
            n_time=_int_or_list(args.time),
            snr_db=args.snr_db,
            seed=args.seed,
            allow_small_clusters=args.allow_small_clusters,
        )
        datasets, truth = generate_dataset(spec)
    except (JpjicaError, ValueError) as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_BAD_SCENARIO
    jio.save_dataset(args.out, datasets, truth, spec.to_dict(), binary=args.binary)
    print(f"wrote {len(datasets)} subjects to {args.out}")
    return EXIT_OK


def cmd_decompose(args: argparse.Namespace) -> int:
    try:
        datasets, _, _ = jio.load_dataset(args.input)
        components: int | str
        if args.components == "auto":
            components = "auto-bic"
        elif args.components == "min":
            components = "global-min"
        else:
            components = int(args.components)
        weights = tuple(float(w) for w in args.weights.split(","))
        sigma0: float | str = args.sigma0 if args.sigma0 == "auto" else float(args.sigma0)
        config = AlgoConfig(
            weights=weights,  # type: ignore[arg-type]
            max_outer=args.max_iter,
            eps0=args.eps0,
            n_components=components,
            sigma0=sigma0,
            tau_joint=args.tau_joint,
            n_clusters=args.n_clusters,
            estimator=args.estimator,
            seed=args.seed,
        )
    except (JpjicaError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    try:
        if args.algorithm == "jithica":
            decomp = run_ji_thica(datasets, config)
        else:
            decomp = label_decomposition(run_jpji_ica(datasets, config))
    except JpjicaError as exc:
        print(f"error: decomposition failed: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    jio.save_decomposition(args.out, decomp, binary=args.binary)
    feats = decomp.features
    sigma_txt = "none" if feats is None or feats.sigma_opt is None else f"{feats.sigma_opt:.6g}"
    print(
        f"decomposed {decomp.n_subjects} subjects, {decomp.n_slots} slots"
        f" (algorithm={decomp.algorithm}, sigma={sigma_txt})"
    )
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        bundle = jio.load_decomposition(args.results)
        datasets, truth, ds_manifest = jio.load_dataset(args.dataset)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot load inputs: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    if truth is None:
        print("error: dataset has no ground truth", file=sys.stderr)
        return EXIT_NO_TRUTH
    if bundle.labels is None:
        print("error: results carry no labels", file=sys.stderr)
        return EXIT_BAD_INPUT
    if len(bundle.sources) != len(truth.sources) or any(
        b.shape[1] != t.shape[1] for b, t in zip(bundle.sources, truth.sources)
    ):
        print(
            "error: results and dataset disagree on subjects or voxels",
            file=sys.stderr,
        )
        return EXIT_BAD_INPUT
    matches = match_sources(truth.sources, bundle.sources)
    overall, per_subject = jsir(matches)
    counts = acc_counts_run(truth.labels, bundle.labels)
    peers = acc_peer_sets_run(truth.labels, bundle.labels, matches)
    features_rows = _feature_rows(bundle)
    report = {
        "dataset": {
            "scenario": ds_manifest.get("scenario"),
            "n_subjects": ds_manifest.get("n_subjects"),
            "n_voxels": ds_manifest.get("n_voxels"),
        },
        "results": {
            "algorithm": bundle.manifest.get("algorithm"),
            "config": bundle.manifest.get("config"),
            "joint_slots": bundle.manifest.get("joint_slots"),
            "sigma_opt": bundle.manifest.get("sigma_opt"),
        },
        "metrics": {
            "jsir_db": overall,
            "jsir_per_subject": per_subject,
            "acc_counts": {k: bool(v) for k, v in counts.items()},
            "acc_peer_sets": peers,
        },
        "matching": [
            {
                "est_of_true": m.est_of_true.tolist(),
                "correlation": m.correlation.tolist(),
                "sign": m.sign.tolist(),
            }
            for m in matches
        ],
        "features": features_rows,
    }
    out = Path(args.out) if args.out else Path(args.results) / "report.json"
    jio.save_report(out, report)
    acc_txt = " ".join(f"{k}={'yes' if v else 'no'}" for k, v in counts.items())
    print(f"jSIR: {overall:.2f} dB")
    print(f"count accuracy: {acc_txt}")
    print(f"peer-set accuracy: {peers:.2f}%")
    print(f"wrote {out}")
    return EXIT_OK


def _feature_rows(bundle: jio.ResultsBundle) -> list[dict]:
    rows: list[dict] = []
    feats = bundle.features
    if feats is None:
        return rows
    slot_counters = [0] * len(bundle.subject_ids)
    for c in range(feats.jpjif.shape[0]):
        for k, sid in enumerate(bundle.subject_ids):
            if np.isnan(feats.jpjif[c, k]):
                continue
            kind = None
            if bundle.labels is not None:
                kind = bundle.labels[k][slot_counters[k]].kind.value
            slot_counters[k] += 1
            rows.append(
                {
                    "slot": c,
                    "subject": sid,
                    "jpjif": float(feats.jpjif[c, k]),
                    "kurtosis": float(feats.kurtosis[c, k]),
                    "kind": kind,
                }
            )
    return rows


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(jio.load_report(path))
        except (ValueError, OSError, json.JSONDecodeError) as exc:
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)
    if not reports:
        print("error: no usable report files", file=sys.stderr)
        return EXIT_NO_REPORTS
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_group_table(out / "convergence.csv", reports, "max_outer", _key_max_outer)
    _write_group_table(out / "snr.csv", reports, "snr_db", _key_snr)
    _write_group_table(out / "subjects.csv", reports, "n_subjects", _key_subjects)
    _write_group_table(out / "comparison.csv", reports, "algorithm", _key_algorithm)
    with open(out / "kurtosis_scatter.csv", "w") as fh:
        fh.write("algorithm,slot,subject,kurtosis,jpjif,kind\n")
        for rep in reports:
            algo = (rep.get("results") or {}).get("algorithm", "")
            for row in rep.get("features", []):
                fh.write(
                    f"{algo},{row['slot']},{row['subject']},"
                    f"{row['kurtosis']:.17g},{row['jpjif']:.17g},{row.get('kind') or ''}\n"
                )
    print(f"wrote tables for {len(reports)} runs to {out}")
    return EXIT_OK


def _key_max_outer(rep: dict):
    return ((rep.get("results") or {}).get("config") or {}).get("max_outer")


def _key_snr(rep: dict):
    scenario = (rep.get("dataset") or {}).get("scenario") or {}
    val = scenario.get("snr_db")
    return "inf" if val is None else val


def _key_subjects(rep: dict):
    return (rep.get("dataset") or {}).get("n_subjects")


def _key_algorithm(rep: dict):
    return (rep.get("results") or {}).get("algorithm")


def _write_group_table(path: Path, reports: list[dict], key_name: str, key_fn) -> None:
    groups: dict = {}
    for rep in reports:
        groups.setdefault(key_fn(rep), []).append(rep)
    with open(path, "w") as fh:
        fh.write(
            f"{key_name},n_runs,jsir_db_mean,acc_joint,acc_pjoint,acc_individual,"
            "acc_peer_sets_mean\n"
        )
        for key in sorted(groups, key=lambda v: (v is None, str(v))):
            reps = groups[key]
            jsirs = [r["metrics"]["jsir_db"] for r in reps]
            peer = [r["metrics"]["acc_peer_sets"] for r in reps]
            accs = {}
            for kind in ("joint", "pjoint", "individual"):
                vals = [100.0 * bool(r["metrics"]["acc_counts"].get(kind)) for r in reps]
                accs[kind] = float(np.mean(vals))
            fh.write(
                f"{key},{len(reps)},{float(np.mean(jsirs)):.6g},"
                f"{accs['joint']:.6g},{accs['pjoint']:.6g},{accs['individual']:.6g},"
                f"{float(np.mean(peer)):.6g}\n"
            )


if __name__ == "__main__":
    sys.exit(main())
