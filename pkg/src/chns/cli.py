"""Command line entry point: ``chns converge|bubble|rt --config <path>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .config import ConfigError, parse_config
from .linalg import SolverError

COMMANDS = {
    "converge": ("converge",),
    "bubble": ("bubble1", "bubble2"),
    "rt": ("rayleigh-taylor",),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chns", description="Divergence-free HDG Cahn-Hilliard-Navier-Stokes benchmarks")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path, help="run configuration file")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: ./out/<command>)")
    p.add_argument("--threads", type=int, default=None, help="BLAS/solver thread limit")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    if args.threads is not None and args.threads < 1:
        print("chns: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"chns: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        print(f"chns: {args.config}: {exc}", file=sys.stderr)
        return 2
    if cfg.kind not in COMMANDS[args.command]:
        print(f"chns: config kind {cfg.kind!r} does not match command {args.command!r}", file=sys.stderr)
        return 2
    out = args.out or Path("out") / args.command

    from . import drivers

    try:
        with threadpool_limits(limits=args.threads):
            if args.command == "converge":
                rows = drivers.run_convergence(cfg, out)
                print(drivers.format_convergence(rows))
            elif args.command == "bubble":
                res = drivers.run_bubble(cfg, out)
                print(json.dumps(res.summary, indent=2))
            else:
                res = drivers.run_rt(cfg, out)
                print(json.dumps(res.summary, indent=2))
    except (SolverError, FloatingPointError, OSError) as exc:
        print(f"chns: run failed: {exc}", file=sys.stderr)
        return 1
    print(f"outputs written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
