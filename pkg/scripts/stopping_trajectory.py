"""Error metrics along the descent trajectory, used to calibrate max_iter.

At desk scale the truncated residual of the true field is not small, so the
iteration count acts as the regulariser: max c rises past the true value if
the descent runs long. This prints the metrics every ``--every`` iterations.

Usage: python scripts/stopping_trajectory.py [--phantom NAME] [--max-iter M] [--every K] [--set key=value ...]
"""

import argparse
import time

import numpy as np

from convexify import optim, solver
from convexify.config import RunConfig
from convexify.experiments import make_dataset
from _common import apply_overrides


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--phantom", default="ellipsoid5")
    p.add_argument("--max-iter", type=int, default=3000)
    p.add_argument("--every", type=int, default=250)
    p.add_argument("--set", nargs="*", default=[])
    a = p.parse_args()
    cfg = apply_overrides(RunConfig(phantom=a.phantom, max_iter=a.max_iter), a.set)
    ds = make_dataset(cfg)
    P = solver.assemble_problem(ds.data, cfg)
    V0 = solver.initialize(P, cfg.effective_qr_eps)
    F = solver.DiscreteFunctional(P.spec)
    grid = cfg.spatial_grid()

    def show(tag, coeffs):
        c = solver.recover_c(solver.SpectralField(coeffs), P.basis, grid, cfg.x0, cfg.c_policy)
        m = solver.error_metrics(c, ds.c_true, grid)
        print(f"{tag:>8s}  max c {m['max_c']:.3f}  rel {m['relative_error_max_c']:.3f}  "
              f"target L2 {m['l2_error_in_target']:.4f}  centroid offset {m['centroid_offset_in_h']:.2f} h",
              flush=True)

    show("start", V0.coeffs)
    riesz = solver.descent_metric(P, cfg.descent_metric)
    t0 = time.perf_counter()

    def cb(m, x):
        if (m + 1) % a.every == 0:
            show(f"{m + 1}", F.full(x).reshape(V0.coeffs.shape))

    optim.descend(F.value, F.gradient, F.free(V0.coeffs),
                  optim.DescentConfig(eta=cfg.eta, max_iter=cfg.max_iter, tol=cfg.tol), riesz=riesz, callback=cb)
    print(f"{time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
