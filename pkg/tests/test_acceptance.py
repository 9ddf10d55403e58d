"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The reconstruction criteria (Test-1 reconstruction, weight ablation, noise
sweep) run the full desk-scale pipeline with the default configuration and
take several minutes each.
"""

from __future__ import annotations

import time

import numpy as np

from convexify import optim
from convexify.config import RunConfig
from convexify.experiments import ablation, affine_fit, make_dataset, noise_sweep
from convexify.solver import reconstruct
from convexify.verification import (basis_suite, consistency_suite, contraction_suite, forward_suite,
                                    gradient_problem)

RESULTS: list[str] = []


def report(capsys, number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}: {detail}"
    RESULTS.append(line)
    with capsys.disabled():
        print("\n" + line)


def test_criterion_1_gradient(capsys):
    t0 = time.perf_counter()
    F, x, rng = gradient_problem(n_x=21, N=5, seed=0)
    g = F.gradient(x)
    worst = 0.0
    for _ in range(20):
        d = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        d /= np.sqrt(optim.inner(d, d))
        fd = (F.value(x + 1e-6 * d) - F.value(x - 1e-6 * d)) / 2e-6
        an = optim.inner(g, d)
        worst = max(worst, abs(fd - an) / abs(an))
    secs = time.perf_counter() - t0
    ok = worst < 1e-6 and secs < 120
    report(capsys, 1, "gradient vs central differences", ok,
           f"worst relative error {worst:.2e} over 20 directions (< 1e-6), {secs:.1f} s (< 120 s)")
    assert ok


def test_criterion_2_contraction(capsys):
    checks = contraction_suite(slack=0.05)
    worst = max(c.value for c in checks)
    ok = all(c.passed for c in checks)
    report(capsys, 2, "contraction rate", ok, f"max measured ratio / q = {worst:.4f} (<= 1.05)")
    assert ok


def test_criterion_3_basis(capsys):
    checks = basis_suite(N=7, n_k=121)
    by = {c.name: c for c in checks}
    ok = all(c.passed for c in checks)
    report(capsys, 3, "basis", ok,
           f"orthonormality {by['orthonormality deviation'].value:.2e} (< 1e-8), "
           f"s solve residual {by['s-matrix solve residual'].value:.2e} (< 1e-8), "
           f"|s11 - 1| {by['|s_11 - 1|'].value:.2e} (< 1e-10)")
    assert ok


def test_criterion_4_zero_contrast(capsys):
    t0 = time.perf_counter()
    cfg = RunConfig(phantom="uniform", delta=0.0)
    ds = make_dataset(cfg)
    res = reconstruct(ds.data, cfg, ds.c_true)
    dev = float(np.abs(res.c - 1.0).max())
    secs = time.perf_counter() - t0
    ok = dev < 1e-3 and secs < 300
    report(capsys, 4, "zero contrast", ok, f"sup |c - 1| = {dev:.2e} (< 1e-3), {secs:.0f} s (< 300 s)")
    assert ok


def test_criterion_5_test1_reconstruction(capsys):
    t0 = time.perf_counter()
    cfg = RunConfig(phantom="ellipsoid5", delta=0.1)
    ds = make_dataset(cfg)
    res = reconstruct(ds.data, cfg, ds.c_true)
    m = res.metrics
    secs = time.perf_counter() - t0
    ok = m["relative_error_max_c"] <= 0.25 and m["centroid_offset_in_h"] <= 2.0
    report(capsys, 5, "Test-1 desk reconstruction", ok,
           f"max c {m['max_c']:.3f} (true 5), relative error {m['relative_error_max_c']:.3f} (<= 0.25), "
           f"centroid offset {m['centroid_offset_in_h']:.2f} h (<= 2), {secs:.0f} s")
    assert ok


def test_criterion_6_weight_ablation(capsys):
    cfg = RunConfig(phantom="ring3", delta=0.1)
    runs = ablation(cfg)
    with_w = runs[f"lambda={cfg.lam:g}"].metrics["l2_error_in_target"]
    without = runs["lambda=0"].metrics["l2_error_in_target"]
    ok = with_w < without
    report(capsys, 6, "Carleman weight ablation", ok,
           f"target L2 error lambda={cfg.lam:g}: {with_w:.4f} vs lambda=0: {without:.4f} (strictly smaller)")
    assert ok


def test_criterion_7_noise_sweep(capsys):
    cfg = RunConfig(phantom="ellipsoid5")
    deltas = [0.025, 0.05, 0.1]
    rows = noise_sweep(cfg, deltas)
    err = [r["h2_error"] for r in rows]
    monotone = all(b >= a for a, b in zip(err, err[1:]))
    slope, floor, r2 = affine_fit(deltas, err)
    ok = monotone and slope > 0 and r2 > 0.9
    report(capsys, 7, "noise convergence", ok,
           f"errors {', '.join(f'{e:.4g}' for e in err)} (monotone: {monotone}), "
           f"slope {slope:.4g} (> 0), floor {floor:.4g}, R^2 {r2:.4f} (> 0.9)")
    assert ok


def test_criterion_8_forward_oracles(capsys):
    checks = forward_suite()
    by = {c.name: c for c in checks}
    ok = all(c.passed for c in checks)
    report(capsys, 8, "forward solver oracles", ok,
           f"Krylov vs dense {by['Krylov vs dense Lippmann-Schwinger'].value:.2e} (< 1e-6), "
           f"Born deviation {by['Born linearity deviation'].value:.2e} (< 1e-3)")
    assert ok


def test_criterion_9_consistency(capsys):
    from convexify.cli import main
    checks = consistency_suite()
    ok = all(c.passed for c in checks)
    with capsys.disabled():
        code = main(["verify", "consistency"])
    ok = ok and code == 0
    worst = ", ".join(f"{c.name} {c.value:.1e}" for c in checks)
    report(capsys, 9, "round-trip and consistency under verify", ok, f"{worst}; verify exit code {code}")
    assert ok
