"""osrb command line: run and validate declarative experiment configs.

Exit codes: 0 success, 2 validation failure, 3 capacity-guard breach.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import ConfigError, parse_config, run, write_outputs
from .probkit import CapacityError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAPACITY = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osrb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True, help="path to the JSON config")
    p_run.add_argument("--out", default=None, help="output path prefix")
    p_run.add_argument("--threads", type=int, default=1, help="worker thread cap")
    p_run.add_argument("--quiet", action="store_true", help="suppress status output")

    p_val = sub.add_parser("validate", help="validate a config without running it")
    p_val.add_argument("--config", required=True, help="path to the JSON config")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    try:
        config = parse_config(text)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"invalid config: {err}", file=sys.stderr)
        return EXIT_VALIDATION

    if args.command == "validate":
        print(f"ok: kind={config.kind} hash={config.config_hash}")
        return EXIT_OK

    try:
        result = run(config, threads=args.threads)
    except CapacityError as exc:
        print(f"capacity guard: {exc}", file=sys.stderr)
        return EXIT_CAPACITY

    prefix = args.out if args.out is not None else config.output
    csv_path, json_path = write_outputs(result, prefix)
    if not args.quiet:
        print(f"wrote {csv_path} and {json_path} "
              f"({len(result.rows)} rows, {result.wall_time:.2f}s, hash {config.config_hash})")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
