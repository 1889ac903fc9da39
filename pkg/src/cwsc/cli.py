"""Command line entry point: ``cwsc run`` and ``cwsc list-experiments``.

Exit codes: 0 all criteria pass, 1 a criterion failed, 2 usage error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .errors import CwscError, UsageError
from .experiments import (ENV_OUTPUT_DIR, KINDS, exit_code_for, format_value, load_config,
                          run)

log = logging.getLogger("cwsc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cwsc", description="Generalized Curie-Weiss ensemble experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="run one experiment from a JSON or YAML config")
    p_run.add_argument("--config", required=True, help="path to a .json, .yaml or .yml config")
    p_run.add_argument("--seed", type=int, help="override the config base_seed")
    p_run.add_argument("--out", help=f"output directory (default: config, then ${ENV_OUTPUT_DIR}/<kind>)")
    p_run.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    p_run.add_argument("--format", choices=("csv", "json"), help="override the config table format")

    sub.add_parser("list-experiments", help="list experiment kinds and their default parameters")
    return parser


def _cmd_list(out):
    for name, kind in KINDS.items():
        out.write(f"{name}: {kind.description}\n")
        for key, value in kind.defaults.items():
            out.write(f"    {key} = {value}\n")


def _cmd_run(args, out) -> int:
    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.format is not None:
        changes["format"] = args.format
    if changes:
        config = replace(config, **changes)
    if args.jobs is not None and args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    log.info("running %s with seed %d", config.kind, config.base_seed)
    result = run(config, jobs=args.jobs)
    for c in result.outcome.criteria:
        out.write(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  measured={format_value(c.measured)}"
                  f"  threshold={format_value(c.threshold)}\n")
    out.write(f"wrote {len(result.files)} files to {result.output_dir}\n")
    return result.status


def main(argv=None) -> int:
    out = sys.stdout
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "list-experiments":
            _cmd_list(out)
            return 0
        return _cmd_run(args, out)
    except CwscError as exc:
        sys.stderr.write(f"cwsc: error: {exc}\n")
        return exit_code_for(exc)
    except ArithmeticError as exc:
        sys.stderr.write(f"cwsc: numerical failure: {exc}\n")
        return exit_code_for(exc)
    except OSError as exc:
        sys.stderr.write(f"cwsc: cannot write output: {exc}\n")
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
