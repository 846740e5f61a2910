#!/usr/bin/env python3
"""Rayleigh-Taylor instability at Re = 1000: bubble and spike tips over time.

The run takes a couple of hours on one core at the default resolution.
"""
import argparse
import logging
from pathlib import Path

from chns.config import parse_config
from chns.drivers import run_rt

ROOT = Path(__file__).resolve().parents[1]

# (bubble, spike) at h = 1/64, k = 2
REFERENCE = {1.0: (-0.3617, 0.2959), 1.5: (-0.6139, 0.4312), 1.75: (-0.7351, 0.4946),
             2.0: (-0.8511, 0.5577), 2.25: (-0.9706, 0.6203), 2.5: (-1.0970, 0.6836)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "rt.cfg")
    ap.add_argument("--out", type=Path, default=ROOT / "out" / "rt")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    res = run_rt(parse_config(args.config.read_text()), args.out)
    print(f"{'t':>5} {'bubble':>9} {'ref':>8} {'spike':>8} {'ref':>8}")
    for t, rec in sorted(res.samples.items()):
        rb, rs = REFERENCE.get(t, (float("nan"), float("nan")))
        print(f"{t:5.2f} {rec.y_bubble:9.4f} {rb:8.4f} {rec.y_spike:8.4f} {rs:8.4f}")
    print(f"steps: {res.summary['steps']} (reference 1808)")


if __name__ == "__main__":
    main()
