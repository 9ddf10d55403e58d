"""Carleman weight ablation on the three-ring phantom: lambda = 1.1 against lambda = 0.

Usage: python scripts/ablation_ring.py [--out DIR] [--set key=value ...]
"""

import argparse
from pathlib import Path

from convexify.cli import _write_result
from convexify.config import RunConfig
from convexify.experiments import ablation
from _common import apply_overrides


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="out/ablation")
    p.add_argument("--set", nargs="*", default=[])
    a = p.parse_args()
    cfg = apply_overrides(RunConfig(phantom="ring3", delta=0.1, output_dir=a.out), a.set)
    runs = ablation(cfg)
    for name, res in runs.items():
        _write_result(Path(a.out) / name.replace("=", "").replace(".", "p"), res, cfg)
        m = res.metrics
        print(f"{name:12s} target L2 {m['l2_error_in_target']:.4f}  max c {m['max_c']:.3f}  "
              f"{m['n_iter']} iterations")


if __name__ == "__main__":
    main()
