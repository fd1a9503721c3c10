"""Command line interface: ``biotplate {cell,macro,micro,compare,check}``.

Exit codes: 0 success, 2 failed check, 3 invalid input, 4 solver failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import load_config
from .errors import InputError, exit_code
from .io import to_jsonable

log = logging.getLogger("biotplate")

COMMANDS = ("cell", "macro", "micro", "compare", "check")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biotplate", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run specification")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--tol", type=float, default=None, help="linear solver residual tolerance")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "micro":
            p.add_argument("--eps", type=float, default=None,
                           help="scale parameter; must be one of micro.eps")
    return parser


def run_command(args: argparse.Namespace) -> dict:
    spec = load_config(args.config)
    if args.tol is not None:
        if not args.tol > 0:
            raise InputError("--tol must be positive", "invalid-input")
        spec.data["tol"] = float(args.tol)
    out = Path(args.out if args.out is not None else spec.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.command == "micro":
        return pipeline.cmd_micro(spec, out, args.eps)
    return getattr(pipeline, f"cmd_{args.command}")(spec, out)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run_command(args)
    except Exception as exc:  # mapped to exit codes below
        code = exit_code(exc)
        tag = getattr(exc, "code", type(exc).__name__)
        print(f"biotplate {args.command}: {tag}: {exc}", file=sys.stderr)
        if code == 4 and not hasattr(exc, "code"):
            log.debug("unexpected failure", exc_info=True)
        return code
    if args.verbose:
        print(json.dumps(to_jsonable(_summary(result)), sort_keys=True, indent=2))
    print(f"biotplate {args.command}: ok")
    return 0


def _summary(result: dict) -> dict:
    return {k: v for k, v in result.items() if not isinstance(v, (list, dict)) or k == "verdict"}


if __name__ == "__main__":
    sys.exit(main())
