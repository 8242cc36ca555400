"""Command-line entry points.

Subcommands: run, sweep, stats, emit-tuples, replay, validate-config.
Exit codes: 0 success, 1 usage/config error, 2 run completed but some
sentences recorded per-sentence errors.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

from .errors import MissingBaseRun, ReflectMtError
from .llm_client import mock_from_fixture
from .pipeline import (
    emit_tuple_dataset,
    load_config,
    read_record_log,
    run_pipeline,
    sweep_records,
)
from .report import build_score_report, render_figure_data, render_significance_table


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise _UsageError(f"{self.format_usage()}error: {message}")


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _build_parser() -> _Parser:
    parser = _Parser(prog="reflectmt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the pipeline from a config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, help="override the configured output directory")

    sweep = sub.add_parser("sweep", help="threshold ablation over a record log")
    sweep.add_argument("--log", required=True, type=Path)
    sweep.add_argument("--thresholds", required=True,
                       help="comma-separated ascending thresholds, e.g. 0.2,0.4,0.6")
    sweep.add_argument("--gate-metric", default="bleu", choices=("bleu", "semantic"))
    sweep.add_argument("--out", type=Path, help="directory for threshold_ablation.csv")

    stats = sub.add_parser("stats", help="paired significance table from a record log")
    stats.add_argument("--log", required=True, type=Path)
    stats.add_argument("--format", default="text", choices=("text", "csv"))
    stats.add_argument("--out", type=Path, help="directory for significance.csv")

    tuples = sub.add_parser("emit-tuples", help="write the tuple dataset from a record log")
    tuples.add_argument("--log", required=True, type=Path)
    tuples.add_argument("--out", required=True, type=Path, help="output file")

    replay = sub.add_parser("replay", help="re-run a config against a recorded cassette")
    replay.add_argument("--config", required=True, type=Path)
    replay.add_argument("--cassette", required=True, type=Path)
    replay.add_argument("--out", type=Path, help="override the configured output directory")

    validate = sub.add_parser("validate-config", help="check a config file")
    validate.add_argument("config", type=Path)
    return parser


def _write_run_artifacts(records, report, out_dir: Path) -> None:
    text, csv_text = render_significance_table(report)
    (out_dir / "significance.txt").write_text(text, encoding="utf-8")
    (out_dir / "significance.csv").write_text(csv_text, encoding="utf-8")
    for name, payload in render_figure_data(report).items():
        (out_dir / name).write_text(payload, encoding="utf-8")


def _cmd_run(args, provider=None) -> int:
    config = load_config(args.config)
    if args.out:
        from dataclasses import replace
        config = replace(config, output_dir=args.out)
    records, report = run_pipeline(config, provider=provider)
    report.provenance = _file_hash(args.config)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    _write_run_artifacts(records, report, config.output_dir)
    errors = sum(1 for r in records if r.error)
    print(
        f"run complete: {len(records)} records, {errors} with errors -> {config.output_dir}"
    )
    return 2 if errors else 0


def _cmd_sweep(args) -> int:
    try:
        thresholds = [float(t) for t in args.thresholds.split(",") if t.strip()]
    except ValueError:
        raise _UsageError(f"--thresholds must be comma-separated numbers, got {args.thresholds!r}")
    if not args.log.exists():
        raise MissingBaseRun(f"record log not found: {args.log}")
    records = read_record_log(args.log)
    results = sweep_records(records, thresholds, gate_metric=args.gate_metric)
    report = build_score_report(records, sweep=results, provenance=_file_hash(args.log))
    payload = render_figure_data(report)["threshold_ablation.csv"]
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "threshold_ablation.csv").write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    coverages = ", ".join(f"{r.threshold:g}->{r.coverage:.2f}" for r in results)
    print(f"sweep complete: {len(results)} thresholds over {len(records)} records ({coverages})")
    return 0


def _cmd_stats(args) -> int:
    records = read_record_log(args.log)
    report = build_score_report(records, provenance=_file_hash(args.log))
    text, csv_text = render_significance_table(report)
    sys.stdout.write(csv_text if args.format == "csv" else text)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "significance.csv").write_text(csv_text, encoding="utf-8")
    print(f"stats complete: {len(report.significance)} metrics over {len(records)} records")
    return 0


def _cmd_emit_tuples(args) -> int:
    records = read_record_log(args.log)
    count = emit_tuple_dataset(records, args.out)
    print(f"wrote {count} tuples -> {args.out}")
    return 0


def _cmd_replay(args) -> int:
    if not args.cassette.exists():
        raise _UsageError(f"cassette not found: {args.cassette}")
    provider = mock_from_fixture(args.cassette)
    return _cmd_run(args, provider=provider)


def _cmd_validate(args) -> int:
    load_config(args.config)
    print(f"config OK: {args.config}")
    return 0


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "stats":
            return _cmd_stats(args)
        if args.command == "emit-tuples":
            return _cmd_emit_tuples(args)
        if args.command == "replay":
            return _cmd_replay(args)
        if args.command == "validate-config":
            return _cmd_validate(args)
        raise _UsageError(parser.format_usage())
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ReflectMtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())
