"""Command-line entry point: ``odlab <command>... --scene ... --resolution ... --out ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import DEFAULT
from .errors import OdlabError
from .runner import COMMANDS, FORMATS, ExperimentConfig, run, run_acceptance


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="odlab", description="Obstacle distance experiments.")
    p.add_argument("commands", nargs="*", metavar="command",
                   help=f"one or more of: {', '.join(COMMANDS)}")
    p.add_argument("--scene", default="builtin:disk",
                   help="scene JSON file or builtin:disk|crescent|free (default builtin:disk)")
    p.add_argument("--resolution", type=float, default=0.01, help="grid spacing h in [1e-4, 0.1]")
    p.add_argument("--out", type=Path, default=Path("odlab_out"), help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=FORMATS, default="csv", dest="fmt")
    p.add_argument("--threshold", action="append", default=[], metavar="KEY=VALUE",
                   help="override a detection threshold; repeatable")
    p.add_argument("--samples", type=int, default=20, help="sample count for minimize")
    p.add_argument("--acceptance", action="store_true", help="run the acceptance battery")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        thresholds = DEFAULT.with_overrides(args.threshold)
        if args.acceptance:
            report = run_acceptance(args.out, args.seed, thresholds)
            return 0 if report.ok else 1
        if not args.commands:
            print("odlab: no command given (see --help)", file=sys.stderr)
            return 2
        cfg = ExperimentConfig(args.scene, args.resolution, list(args.commands), args.out, args.seed,
                               thresholds, args.fmt, args.samples)
        report = run(cfg)
    except OdlabError as exc:
        print(f"odlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if report.errors:
        for e in report.errors:
            print(f"odlab: {e['command']} failed: {e['error']}: {e['message']}", file=sys.stderr)
        return 1
    for name, v in sorted(report.verdicts.items()):
        print(f"{v['status']:<12} {name}: {v['detail']}")
    print(f"outputs in {args.out}: {', '.join(sorted(report.artifacts))}")
    return 0 if report.ok else 1


if __name__ == "__main__":
    sys.exit(main())
