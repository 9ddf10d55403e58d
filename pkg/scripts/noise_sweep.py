"""Reconstruction error against noise level, with an affine fit err = slope delta + floor.

Usage: python scripts/noise_sweep.py [--deltas 0.025,0.05,0.1] [--out DIR] [--set key=value ...]
"""

import argparse
import csv
from pathlib import Path

from convexify.config import RunConfig
from convexify.experiments import affine_fit, noise_sweep
from _common import apply_overrides


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--deltas", default="0.025,0.05,0.1")
    p.add_argument("--out", default="out/noise_sweep")
    p.add_argument("--set", nargs="*", default=[])
    a = p.parse_args()
    deltas = [float(d) for d in a.deltas.split(",")]
    cfg = apply_overrides(RunConfig(phantom="ellipsoid5"), a.set)
    rows = noise_sweep(cfg, deltas)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "noise_sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"delta {r['delta']:<6g} H2 error {r['h2_error']:.4e}  rel. error max c {r['relative_error_max_c']:.4f}")
    slope, floor, r2 = affine_fit(deltas, [r["h2_error"] for r in rows])
    print(f"slope {slope:.4g}  floor {floor:.4g}  R^2 {r2:.4f}")


if __name__ == "__main__":
    main()
