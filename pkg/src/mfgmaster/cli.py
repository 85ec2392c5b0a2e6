"""Command-line entry point: ``mfgmaster run`` and ``mfgmaster validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import UsageError, load_config, run_experiment, validate_config
from .validation import ValidationError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mfgmaster", description="MFG master-field solver and probe harness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run the experiments named in a config")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    run.add_argument("--jobs", type=int, default=1, help="experiments run in parallel")
    run.add_argument("-v", "--verbose", action="store_true")
    val = sub.add_parser("validate", help="check the model hypotheses only")
    val.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            status, report = validate_config(args.config)
            json.dump(report, sys.stdout, indent=2)
            sys.stdout.write("\n")
            return status
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        configs = load_config(args.config, args.seed)
        return run_experiment(configs, args.out, jobs=args.jobs)
    except (UsageError, ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"mfgmaster: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
