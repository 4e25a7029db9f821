"""Command-line entry point: one mode per invocation, optional fan-out.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .config import MODES, ConfigError, parse_config
from .runner import run

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qoct",
        description="Grid-based optimal control of one-electron density "
                    "and current.",
    )
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True,
                        help="run configuration file")
    parser.add_argument("--out", default=None,
                        help="override the configured output directory")
    parser.add_argument("--sweep", default=None,
                        help="comma-separated additional config files, run "
                             "concurrently with their own output directories")
    return parser


def _load_configs(args):
    paths = [args.config]
    if args.sweep:
        paths += [p.strip() for p in args.sweep.split(",") if p.strip()]
    configs = [parse_config(p) for p in paths]
    for path, config in zip(paths, configs):
        if config.mode != args.mode:
            raise ConfigError(
                f"{Path(path).name}: mode: config says {config.mode!r}, "
                f"command line says {args.mode!r}"
            )
    if args.out is not None:
        if len(configs) > 1:
            raise ConfigError("--out cannot override a sweep; set out per config")
        configs[0] = replace(configs[0], out=Path(args.out).resolve())
    outs = [c.out for c in configs]
    if len(set(outs)) != len(outs):
        raise ConfigError("sweep configs share an output directory")
    return configs


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        configs = _load_configs(args)
    except ConfigError as exc:
        print(f"qoct: {exc}", file=sys.stderr)
        return 2

    def attempt(config):
        try:
            run(config)
            return 0
        except ConfigError as exc:
            print(f"qoct: {exc}", file=sys.stderr)
            return 2
        except Exception as exc:
            print(f"qoct: {config.mode} failed: {exc}", file=sys.stderr)
            return 3

    if len(configs) == 1:
        return attempt(configs[0])
    with ThreadPoolExecutor(max_workers=min(4, len(configs))) as pool:
        return max(pool.map(attempt, configs))


if __name__ == "__main__":
    sys.exit(main())
