"""Test-1 reconstruction (ellipsoid, c = 5) at desk scale with 10% noise.

Usage: python scripts/test1_desk.py [--out DIR] [--seed S] [--set key=value ...]
"""

import argparse
import json
from pathlib import Path

from convexify.cli import _write_result
from convexify.config import RunConfig
from convexify.experiments import make_dataset
from convexify.solver import reconstruct
from _common import apply_overrides


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="out/test1")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--set", nargs="*", default=[], help="config overrides key=value (JSON values)")
    a = p.parse_args()
    cfg = apply_overrides(RunConfig(phantom="ellipsoid5", delta=0.1, seed=a.seed, output_dir=a.out), a.set)
    ds = make_dataset(cfg)
    res = reconstruct(ds.data, cfg, ds.c_true)
    _write_result(Path(cfg.output_dir), res, cfg)
    keys = ("max_c", "relative_error_max_c", "centroid_offset_in_h", "l2_error_in_target", "n_iter", "seconds")
    print(json.dumps({k: res.metrics[k] for k in keys}, indent=2))


if __name__ == "__main__":
    main()
