"""Command-line entry point: ``privcov run`` and ``privcov summarize``."""

from __future__ import annotations

import argparse
import logging
import sys

from .dataio import DatasetError
from .harness import ConfigError, ExperimentConfig, read_records, run_experiment, summarize, write_summary_csv

EXIT_OK, EXIT_CONFIG, EXIT_DATASET = 0, 2, 3


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _synthetic(text):
    """Parse ``d=32,n=8192,corr=0.5[,seed=0]``."""
    out = {}
    for part in text.split(","):
        key, sep, val = part.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"bad synthetic spec item {part!r}; use key=value")
        key = key.strip()
        try:
            out[key] = float(val) if key == "corr" else int(val)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad value for {key}: {val!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privcov", description="Private covariance estimation benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded sweep and write JSON-lines records")
    run.add_argument("--config", help="JSON file with ExperimentConfig fields")
    run.add_argument("--rho", type=_floats)
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--alpha", type=float)
    run.add_argument("--beta", type=float)
    run.add_argument("--T", type=int, dest="T")
    run.add_argument("--solver", choices=["ipm", "pgd_zeros", "pgd_ones"])
    run.add_argument("--no-components", dest="components", action="store_false", default=None)
    run.add_argument("--estimators", type=_names)
    run.add_argument("--dataset", help="CSV or .npz dataset")
    run.add_argument("--synthetic", type=_synthetic, help="AR(1) data, e.g. d=32,n=8192,corr=0.5")
    run.add_argument("--output", help="JSON-lines output (resumed if it exists)")
    run.add_argument("--timing", dest="record_timing", action="store_true", default=None,
                     help="record wall time per trial (output is then not reproducible byte for byte)")
    run.add_argument("--jobs", type=int, dest="n_jobs")
    run.add_argument("--summary", help="also write a summary CSV here")

    summ = sub.add_parser("summarize", help="aggregate JSON-lines records into a CSV table")
    summ.add_argument("--input", required=True)
    summ.add_argument("--output", required=True)
    return parser


_OVERRIDES = ("rho", "trials", "seed", "alpha", "beta", "T", "solver", "components", "estimators",
              "dataset", "synthetic", "output", "record_timing", "n_jobs")


def config_from_args(args) -> ExperimentConfig:
    base = {}
    if args.config:
        base = ExperimentConfig.from_json(args.config).to_dict()
    for name in _OVERRIDES:
        value = getattr(args, name)
        if value is not None:
            base[name] = value
    # a command-line data source replaces whatever the config file named
    if args.dataset is not None:
        base["synthetic"] = None
    elif args.synthetic is not None:
        base["dataset"] = None
    return ExperimentConfig.from_dict(base)


def _cmd_run(args) -> int:
    config = config_from_args(args)
    records = run_experiment(config)
    failed = sum(r.error is not None for r in records)
    if config.output is None:
        for rec in records:
            print(rec.to_json())
    if args.summary:
        write_summary_csv(summarize(records), args.summary)
    logging.getLogger(__name__).info("%d records, %d failed", len(records), failed)
    return EXIT_OK


def _cmd_summarize(args) -> int:
    try:
        records = read_records(args.input)
    except (OSError, ValueError, TypeError) as exc:
        raise DatasetError(f"cannot read records from {args.input}: {exc}") from exc
    write_summary_csv(summarize(records), args.output)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_summarize(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, FileNotFoundError) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATASET


if __name__ == "__main__":
    sys.exit(main())
