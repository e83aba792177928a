"""Command-line interface: index, run, eval, ablate, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .metrics import TIERS


def _cmd_index(args: argparse.Namespace) -> int:
    summary = pipeline.build_indexes(
        dataset_root=args.dataset_root,
        split=args.split,
        index_dir=args.index_dir,
        train_split=args.train_split,
        cell_cap=args.cell_cap,
        sample_values=args.sample_values,
    )
    print(json.dumps(summary, indent=2))
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = pipeline.RunConfig.from_yaml(args.config)
    result = pipeline.run_benchmark(config)
    print(f"predictions: {result.predictions_path}")
    if result.report is not None:
        print(result.report.to_markdown())
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    report = pipeline.eval_predictions(
        dataset_root=args.dataset_root,
        predictions_path=args.predictions,
        split=args.split,
        mode=args.mode,
        timeout=args.timeout,
        timing_repeats=args.timing_repeats,
        timing_outer=args.timing_outer,
        with_timing=not args.no_timing,
    )
    if args.output:
        Path(args.output).write_text(
            json.dumps(report.to_json(), indent=2), encoding="utf-8"
        )
    print(report.to_markdown())
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = pipeline.RunConfig.from_yaml(args.config)
    summary = pipeline.run_ablation(config)
    for row in summary["rows"]:
        print(
            f"{row['name']:<24} total={row['total']:7.2f}  delta={row['delta_total']:+.2f}"
        )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    wrote = []
    report_path = run_dir / "report.json"
    if report_path.is_file():
        report = json.loads(report_path.read_text(encoding="utf-8"))
        out = run_dir / "metrics.csv"
        with out.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", *TIERS, "total"])
            for metric in ("ex", "soft_f1", "r_ves"):
                values = report.get(metric)
                if values:
                    writer.writerow(
                        [metric] + [values.get(key, "") for key in (*TIERS, "total")]
                    )
            writer.writerow(
                ["count"] + [report["counts"].get(key, 0) for key in (*TIERS, "total")]
            )
        wrote.append(out)
    ablation_path = run_dir / "ablation.json"
    if ablation_path.is_file():
        summary = json.loads(ablation_path.read_text(encoding="utf-8"))
        out = run_dir / "ablation.csv"
        with out.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variant", *TIERS, "total", "delta_total"])
            for row in summary["rows"]:
                writer.writerow(
                    [row["name"]]
                    + [row[key] for key in (*TIERS, "total")]
                    + [row["delta_total"]]
                )
        wrote.append(out)
    if not wrote:
        print(f"nothing to report in {run_dir} (no report.json or ablation.json)")
        return 1
    for path in wrote:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttsql",
        description=(
            "Test-time scaled Text-to-SQL: offline indexing, benchmark runs, "
            "evaluation, and ablations over BIRD-style datasets."
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build schema docs and vector indexes")
    p.add_argument("--dataset-root", required=True)
    p.add_argument("--split", default="dev")
    p.add_argument("--index-dir", default=None)
    p.add_argument("--train-split", default="train")
    p.add_argument("--cell-cap", type=int, default=2000)
    p.add_argument("--sample-values", type=int, default=3)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("run", help="run the benchmark described by a YAML config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("eval", help="score a predictions file against gold SQL")
    p.add_argument("--dataset-root", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", default="dev")
    p.add_argument("--mode", choices=["row_set", "strict"], default="row_set")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--timing-repeats", type=int, default=3)
    p.add_argument("--timing-outer", type=int, default=3)
    p.add_argument("--no-timing", action="store_true", help="skip R-VES timing runs")
    p.add_argument("--output", default=None, help="also write the report as JSON")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="baseline plus one run per disabled stage")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("report", help="render run reports as CSV")
    p.add_argument("--run-dir", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
