#!/usr/bin/env python3
"""Manufactured-solution convergence table next to the published errors."""
import argparse
import logging
from pathlib import Path

from chns.config import parse_config
from chns.drivers import format_convergence, run_convergence

ROOT = Path(__file__).resolve().parents[1]

PUBLISHED = {
    (1, 8): (5.68e-03, 1.96e-02, 1.13e+01),
    (1, 16): (1.10e-03, 5.80e-03, 2.62e+00),
    (1, 32): (2.62e-04, 1.54e-03, 7.29e-01),
    (1, 64): (6.41e-05, 3.92e-04, 2.27e-01),
    (2, 8): (4.39e-04, 1.38e-03, 1.50e+00),
    (2, 16): (5.08e-05, 2.05e-04, 2.26e-01),
    (2, 32): (6.05e-06, 2.47e-05, 2.83e-02),
    (2, 64): (7.58e-07, 3.16e-06, 3.52e-03),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "converge.cfg")
    ap.add_argument("--out", type=Path, default=ROOT / "out" / "converge")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rows = run_convergence(parse_config(args.config.read_text()), args.out)
    print(format_convergence(rows))
    print("\nratio to published error (u, phi, mu):")
    for r in rows:
        ref = PUBLISHED.get((r.k, r.n))
        if ref:
            ratios = [a / b for a, b in zip((r.err_u, r.err_phi, r.err_mu), ref)]
            print(f"  k={r.k} 1/h={r.n:3d}  " + "  ".join(f"{x:5.2f}" for x in ratios))


if __name__ == "__main__":
    main()
