"""Command-line interface: run scenarios, compare policies, validate tables."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_scenario
from .costs import validate_tables
from .decision import POLICY_NAMES
from .metrics import (
    COMPARISON_METRICS,
    RequestRecord,
    compare_policies,
    parse_comparison_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridstream",
        description="Hybrid P2P-CDN live streaming simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario, write summary JSON and trace CSV")
    p_run.add_argument("scenario", help="scenario file (key = value lines)")
    p_run.add_argument("--out", default=".", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override scenario seed")

    p_cmp = sub.add_parser("compare", help="run several policies on paired seeds")
    p_cmp.add_argument("scenario")
    p_cmp.add_argument(
        "--policies", default=",".join(POLICY_NAMES),
        help="comma-separated policy names",
    )
    p_cmp.add_argument("--reps", type=int, default=1, help="seeds per policy")
    p_cmp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p_cmp.add_argument("--out", default=".", help="output directory")
    p_cmp.add_argument("--seed", type=int, default=None, help="override base seed")

    p_val = sub.add_parser(
        "validate-tables", help="diff embedded cost tables against the CSV transcription"
    )
    p_val.add_argument("--quiet", action="store_true")

    p_plot = sub.add_parser(
        "emit-plot-data", help="split a comparison CSV into per-metric series files"
    )
    p_plot.add_argument("comparison_csv")
    p_plot.add_argument("--out", default=".", help="output directory")

    return parser


def _cmd_run(args) -> int:
    from .simulator import run

    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
        scenario.validate()
    result = run(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary_path = out / "summary.json"
    payload = {
        "scenario": {"policy": scenario.policy, "abr": scenario.abr, "seed": scenario.seed},
        "summary": result.summary.to_json_dict(),
        "trace_hash": result.trace_hash,
        "issued_count": result.issued_count,
        "served_count": result.served_count,
        "failed_count": result.failed_count,
    }
    summary_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    trace_path = out / "trace.csv"
    with trace_path.open("w") as fh:
        fh.write(RequestRecord.CSV_HEADER + "\n")
        for record in result.records:
            fh.write(record.csv_row() + "\n")
    print(f"served={result.served_count} failed={result.failed_count} "
          f"mean_latency={result.summary.mean_serving_latency_s:.4f}s "
          f"mean_qoe={result.summary.mean_qoe:.3f}")
    print(f"wrote {summary_path} and {trace_path}")
    return 0


def _cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
        scenario.validate()
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    unknown = [p for p in policies if p not in POLICY_NAMES]
    if unknown:
        raise ConfigError(f"unknown policies: {unknown}")
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    comparison = compare_policies(scenario, policies, args.reps, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "comparison.csv"
    csv_path.write_text(comparison.to_csv())
    for metric in ("mean_serving_latency_s", "mean_qoe", "edge_energy_kwh"):
        cells = "  ".join(
            f"{p}={comparison.mean(p, metric):.4g}" for p in policies
        )
        print(f"{metric}: {cells}")
    print(f"wrote {csv_path}")
    return 0


def _cmd_validate_tables(args) -> int:
    problems = validate_tables()
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return 1
    if not args.quiet:
        print("cost tables match the checked-in transcription")
    return 0


def _cmd_emit_plot_data(args) -> int:
    text = Path(args.comparison_csv).read_text()
    stats = parse_comparison_csv(text)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    policies = list(dict.fromkeys(policy for policy, _ in stats))
    written = []
    for metric in COMPARISON_METRICS:
        rows = [(p, *stats[(p, metric)]) for p in policies if (p, metric) in stats]
        if not rows:
            continue
        path = out / f"plot_{metric}.csv"
        with path.open("w") as fh:
            fh.write("policy,mean,stdev\n")
            for policy, mean, stdev in rows:
                fh.write(f"{policy},{mean!r},{stdev!r}\n")
        written.append(path)
    print(f"wrote {len(written)} per-metric files to {out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "validate-tables":
            return _cmd_validate_tables(args)
        if args.command == "emit-plot-data":
            return _cmd_emit_plot_data(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
