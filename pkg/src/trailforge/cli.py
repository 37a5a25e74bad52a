"""Command-line entry point: ``trailforge run`` and ``trailforge validate``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PipelineConfig
from .exceptions import ConfigError
from .pipeline import EXIT_CONFIG, EXIT_OK, run


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trailforge", description="Motion trails for stationary-camera image sequences.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the pipeline")
    r.add_argument("--config", required=True, help="flat 'section.key = value' file")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting (repeatable)")
    r.add_argument("--stages", help="comma-separated subset of deshake,background,segment,ghosts,render")
    r.add_argument("--threads", help="worker count or 'auto'")
    r.add_argument("--encode", help="encoder command; {pattern} and {fps} are substituted")
    r.add_argument("--ghost-overlay", action="store_true", help="also write annotated ghost PNGs")
    r.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")

    v = sub.add_parser("validate", help="check a config without touching images")
    v.add_argument("--config", required=True)
    v.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    return p


def _load(args) -> PipelineConfig:
    overrides = list(args.set)
    # dedicated flags are shorthands for --set and take precedence over it
    if getattr(args, "stages", None):
        overrides.append(f"run.stages={args.stages}")
    if getattr(args, "threads", None):
        overrides.append(f"run.threads={args.threads}")
    return PipelineConfig.load(args.config, overrides)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING if getattr(args, "quiet", False) else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"trailforge: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        problems = cfg.validate(paths=True)
        for line in problems:
            print(line)
        if not problems:
            print("ok")
        return EXIT_CONFIG if problems else EXIT_OK

    return run(cfg, ghost_overlay=args.ghost_overlay, encode=args.encode).exit_code


if __name__ == "__main__":
    sys.exit(main())
