"""The fine-scale configuration (41^3 lattice, 121 wavenumbers, N = 7).

Much slower than the desk defaults; the forward data alone takes a long time on
one core. Pass ``--phantom`` to choose ellipsoid5, ring3 or letterY2.

Usage: python scripts/fine_scale.py [--phantom NAME] [--out DIR] [--set key=value ...]
"""

import argparse
import json
from pathlib import Path

from convexify.cli import _write_result
from convexify.config import FINE_SCALE, RunConfig
from convexify.experiments import make_dataset
from convexify.solver import reconstruct
from _common import apply_overrides


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--phantom", default="ellipsoid5")
    p.add_argument("--out", default="out/fine_scale")
    p.add_argument("--set", nargs="*", default=[])
    a = p.parse_args()
    cfg = apply_overrides(RunConfig(phantom=a.phantom, delta=0.1, output_dir=a.out, **FINE_SCALE), a.set)
    ds = make_dataset(cfg)
    res = reconstruct(ds.data, cfg, ds.c_true)
    _write_result(Path(a.out), res, cfg)
    keys = ("max_c", "relative_error_max_c", "centroid_offset_in_h", "l2_error_in_target", "seconds")
    print(json.dumps({k: res.metrics.get(k) for k in keys}, indent=2))


if __name__ == "__main__":
    main()
