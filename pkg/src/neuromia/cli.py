"""Command line entry point: ``neuromia run | report | prepare-data``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiment import ConfigError, emit_report, parse_config, read_summary, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    result = run_experiment(cfg, out=args.out, jobs=args.jobs)
    report = emit_report(result.rows, result.baseline_rows, result.out_dir)
    print(report.table(), end="")
    print(f"wrote {result.summary_path}")
    return EXIT_OK


def _cmd_report(args) -> int:
    path = Path(args.summary)
    if not path.is_file():
        raise ConfigError(f"summary not found: {path}")
    rows = read_summary(path)
    baseline = path.with_name("baseline.csv")
    base_rows = read_summary(baseline) if baseline.is_file() else []
    report = emit_report(rows, base_rows, args.out or path.parent)
    print(report.table(), end="")
    return EXIT_OK


def _cmd_prepare(args) -> int:
    from .prepare import default_data_dir, prepare_data

    out = prepare_data(args.out or default_data_dir(), mnist=not args.no_mnist)
    print(f"datasets written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuromia", description="Membership inference and DPSGD experiments on ANN, SNN and evolved spiking networks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="aggregate an existing summary.csv")
    rep.add_argument("summary")
    rep.add_argument("--out", help="directory for report.csv / report.txt")
    rep.set_defaults(func=_cmd_report)

    prep = sub.add_parser("prepare-data", help="write the bundled datasets to the data directory")
    prep.add_argument("--out", help="target directory (default: $NEUROMIA_DATA or ./data)")
    prep.add_argument("--no-mnist", action="store_true")
    prep.set_defaults(func=_cmd_prepare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any run failure maps to exit 2
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
