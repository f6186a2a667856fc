"""Command-line entry point: ``cransparse run`` and ``cransparse summarize``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .harness import (IntegrityError, load_experiment_spec, parse_methods, read_records,
                      run_experiment, summarize, summary_path, write_records, write_summary)
from .network import ConfigurationError


def _print_summary(rows, stream=None):
    stream = stream or sys.stdout
    header = f"{'method':<6} {'params':<28} {'snr':>6} {'ASR':>9} {'std':>7} {'iters':>7} {'ops':>12} {'level':>7} {'n':>5}"
    print(header, file=stream)
    for r in rows:
        print(f"{r.method:<6} {r.params:<28} {r.snr_db:>6.1f} {r.mean_asr:>9.3f} {r.std_asr:>7.3f} "
              f"{r.mean_iters:>7.2f} {r.mean_ops:>12.0f} {r.level:>7.0f} {r.trials:>5d}", file=stream)


def cmd_run(args) -> int:
    spec = load_experiment_spec(args.config)
    overrides = {}
    if args.output:
        overrides["output_path"] = args.output
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.methods:
        overrides["methods"] = tuple(parse_methods(args.methods))
    spec = replace(spec, **overrides)

    records = run_experiment(spec, jobs=args.jobs)
    write_records(records, spec.output_path)
    rows = summarize(records)
    write_summary(rows, summary_path(spec.output_path))
    if not args.quiet:
        _print_summary(rows)
    failed = sum(r.status != "ok" for r in records)
    if failed:
        logging.warning("%d of %d records carry an error status", failed, len(records))
    return 0


def cmd_summarize(args) -> int:
    rows = summarize(read_records(args.input))
    if args.output:
        write_summary(rows, args.output)
    _print_summary(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cransparse",
        description="Sparsified Gaussian message passing for C-RAN uplink detection.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo experiment")
    run.add_argument("--config", required=True, help="experiment YAML file")
    run.add_argument("--output", help="records CSV (overrides output_path)")
    run.add_argument("--trials", type=int, help="number of trials")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--methods", help="comma-separated list, e.g. pure,drps:n_p=4:precoder=zf")
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.add_argument("-q", "--quiet", action="store_true", help="do not print the summary")
    run.set_defaults(func=cmd_run)

    summ = sub.add_parser("summarize", help="aggregate a records CSV")
    summ.add_argument("--input", required=True, help="records CSV written by 'run'")
    summ.add_argument("--output", help="write the summary CSV here")
    summ.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, IntegrityError, OSError) as exc:
        print(f"cransparse: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
