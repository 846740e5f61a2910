#!/usr/bin/env python3
"""Time-step halving sweep on the manufactured problem with a fixed mesh."""
import argparse
import math
from pathlib import Path

from chns.config import parse_config
from chns.drivers import manufactured_errors

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--n", type=int, default=16, help="elements per direction")
    ap.add_argument("--dt", type=float, nargs="+", default=[0.1, 0.05, 0.025])
    args = ap.parse_args()

    cfg = parse_config((ROOT / "configs" / "converge.cfg").read_text())
    prev = None
    print(f"{'dt':>8} {'|u-uh|':>10} {'ord':>5} {'|phi-phih|':>10} {'ord':>5} {'|mu-muh|':>10} {'ord':>5}")
    for dt in args.dt:
        _, dt_used, eu, ep, em = manufactured_errors(cfg, args.k, args.n, dt)
        errs = (eu, ep, em)
        if prev is None:
            orders = ["  -- "] * 3
        else:
            r = math.log(prev[0] / dt_used)
            orders = [f"{math.log(a / b) / r:5.2f}" for a, b in zip(prev[1], errs)]
        print(f"{dt_used:8.4f} {eu:10.3e} {orders[0]} {ep:10.3e} {orders[1]} {em:10.3e} {orders[2]}")
        prev = (dt_used, errs)


if __name__ == "__main__":
    main()
