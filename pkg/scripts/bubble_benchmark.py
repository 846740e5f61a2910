#!/usr/bin/env python3
"""Rising-bubble benchmark, cases 1 and 2, against the reference metrics."""
import argparse
import json
import logging
from pathlib import Path

from chns.config import parse_config
from chns.drivers import run_bubble

ROOT = Path(__file__).resolve().parents[1]

# reference values at h = 1/32, k = 2
REFERENCE = {
    "bubble1": {"c_min": 0.9166, "t_c_min": 1.885, "V_c_max": 0.2371, "t_V_c_max": 0.970, "y_c_final": 1.0732},
    "bubble2": {"c_min": 0.6629, "V_c_max": 0.2491, "y_c_final": 0.9026},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("case", choices=["1", "2"])
    ap.add_argument("--config", type=Path, default=None)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg_path = args.config or ROOT / "configs" / f"bubble{args.case}.cfg"
    cfg = parse_config(cfg_path.read_text())
    res = run_bubble(cfg, args.out or ROOT / "out" / f"bubble{args.case}")
    print(json.dumps(res.summary, indent=2))
    ref = REFERENCE[cfg.kind]
    print(f"\n{'quantity':<10} {'computed':>10} {'reference':>10} {'diff':>8}")
    for key, want in ref.items():
        got = res.summary[key]
        diff = got - want if key.startswith("t_") else (got - want) / want
        unit = "" if key.startswith("t_") else "%"
        print(f"{key:<10} {got:10.4f} {want:10.4f} {diff * (1 if key.startswith('t_') else 100):7.2f}{unit}")


if __name__ == "__main__":
    main()
