"""Self-check suites run by ``convexify verify <suite>``.

Each suite returns a list of :class:`Check` records; a suite passes when all
of its checks pass.
"""

from __future__ import annotations

import json
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import optim
from .basis import WavenumberGrid, assemble_tensors, build_basis, quadrature_weights
from .carleman import CarlemanWeight, verify_carleman
from .config import RunConfig
from .forward import (Phantom, SpatialGrid, add_noise, born_term, generate_data, incident_field,
                      solve_scattering)
from .io import load_cauchy, read_tensor, save_cauchy, write_tensor
from .phantoms import get_phantom
from .transform import (BoundaryVectors, assemble_B, assemble_boundary, log_ratio,
                        spectral_project, unwrapped_log)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"[{tag}] {self.name}: {self.value:.3e} (threshold {self.threshold:.1e}){extra}"


def _below(name, value, threshold, detail=""):
    return Check(name, float(value), threshold, bool(value < threshold), detail)


# basis ---------------------------------------------------------------------

def basis_suite(N: int = 7, n_k: int = 121, seed: int = 0) -> list[Check]:
    kg = WavenumberGrid(np.pi, 2 * np.pi, n_k)
    basis = build_basis(kg, N)
    G = basis.values @ (basis.quad_weights[:, None] * basis.values.T)
    t = assemble_tensors(basis)
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(N)
    x = np.linalg.solve(t.s, b)
    # fundamental theorem check in the regime where the quadrature resolves the basis
    b4 = build_basis(kg, 4)
    ft = np.abs(b4.derivs @ b4.quad_weights - (b4.values[:, -1] - b4.values[:, 0])).max()
    return [
        _below("orthonormality deviation", np.abs(G - np.eye(N)).max(), 1e-8, f"N={N}, n_k={n_k}"),
        _below("s-matrix solve residual", np.linalg.norm(t.s @ x - b) / np.linalg.norm(b), 1e-8),
        _below("|s_11 - 1|", abs(t.s[0, 0] - 1.0), 1e-10),
        _below("derivative/endpoint consistency", ft, 1e-8, "N=4"),
    ]


# gradient ------------------------------------------------------------------

def gradient_problem(n_x: int = 21, N: int = 5, seed: int = 0):
    """Synthetic functional at desk scale with random boundary data."""
    from .solver import DiscreteFunctional, FunctionalSpec

    cfg = RunConfig(n_x=n_x, N=N)
    grid, kg = cfg.spatial_grid(), cfg.wavenumber_grid()
    basis = build_basis(kg, N)
    rng = np.random.default_rng(seed)
    n = grid.n_x

    def crand(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    g1 = np.zeros((N, n, n, n), dtype=complex)
    g1[:, :, :, 0] = 0.05 * crand(N, n, n)
    bnd = BoundaryVectors(g1=g1, g0=0.05 * crand(N, n, n))
    B = assemble_B(None, basis, kg, grid, cfg.x0)
    spec = FunctionalSpec(assemble_tensors(basis), B, cfg.weight(), grid, bnd, cfg.eps)
    F = DiscreteFunctional(spec)
    x = 0.05 * crand(N, F.ops.interior.size)
    return F, x, rng


def gradient_suite(n_dir: int = 20, step: float = 1e-6, seed: int = 0) -> list[Check]:
    F, x, rng = gradient_problem(seed=seed)
    g = F.gradient(x)
    worst = 0.0
    for _ in range(n_dir):
        d = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
        d /= np.sqrt(optim.inner(d, d))
        fd = (F.value(x + step * d) - F.value(x - step * d)) / (2 * step)
        an = optim.inner(g, d)
        worst = max(worst, abs(fd - an) / abs(an))
    return [_below("gradient vs central differences", worst, 1e-6, f"{n_dir} directions, step {step:g}")]


# contraction ----------------------------------------------------------------

def contraction_suite(seed: int = 0, dim: int = 40, slack: float = 0.05) -> list[Check]:
    """Fixed-step descent on SPD quadratics 0.5 x^T A x, minimiser 0."""
    rng = np.random.default_rng(seed)
    checks = []
    for L, Lam in ((1.0, 0.2), (4.0, 1.0), (0.5, 0.5)):
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        eig = np.linspace(Lam, L, dim)
        A = (Q * eig) @ Q.T
        eta0 = min(2 * Lam / L**2, 1.0)
        worst = 0.0
        for frac in (0.25, 0.5, 0.9):
            eta = frac * eta0
            q = optim.theoretical_rate(L, Lam, eta)
            cfg = optim.DescentConfig(eta=eta, max_iter=30, tol=1e-300)
            x0 = rng.standard_normal(dim)
            _, tr = optim.descend(lambda v: 0.5 * v @ A @ v, lambda v: A @ v, x0, cfg)
            norms = np.array([np.linalg.norm(x0)] + tr.iterates_norms)
            ratios = (norms[1:] / norms[:-1]) ** 2
            worst = max(worst, ratios.max() / q)
        checks.append(Check(f"step ratio / q (L={L}, Lambda={Lam})", worst, 1 + slack,
                            worst <= 1 + slack))
    return checks


# carleman -------------------------------------------------------------------

def bump_samples(grid: SpatialGrid, count: int = 3, seed: int = 0) -> list[np.ndarray]:
    """Smooth compactly supported bumps vanishing with their normal derivative on the boundary."""
    rng = np.random.default_rng(seed)
    X, Y, Z = grid.mesh()
    out = []
    for _ in range(count):
        c = rng.uniform(-0.3, 0.3, 3)
        r2 = ((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2) / 0.5**2
        out.append(np.where(r2 < 1, (1 - r2) ** 4, 0.0))
    return out


def carleman_suite(n_x: int = 21) -> list[Check]:
    grid = SpatialGrid(1.0, n_x)
    rep = verify_carleman(CarlemanWeight(1.1, 1.5), [1.1, 2.0, 4.0], bump_samples(grid), grid)
    cmin = min(rep.constants)
    return [Check("fitted Carleman constant (min over lambda)", cmin, rep.floor,
                  bool(cmin > rep.floor and rep.stable), str(rep))]


# forward --------------------------------------------------------------------

def forward_suite() -> list[Check]:
    grid = SpatialGrid(1.0, 11)
    kg = WavenumberGrid(np.pi, 2 * np.pi, 3)
    x0 = (0.0, 0.0, -4.0)
    X, Y, Z = grid.mesh()
    c = np.where(X**2 + Y**2 + (Z + 0.2) ** 2 <= 0.35**2, 3.0, 1.0)
    ph = Phantom(c, "ball")
    uk = solve_scattering(ph, kg, x0, grid, rtol=1e-12)
    ud = solve_scattering(ph, kg, x0, grid, dense=True)
    rel = np.linalg.norm(uk.values - ud.values) / np.linalg.norm(ud.values)
    eps = 1e-4
    weak = Phantom(1.0 + eps * (c - 1.0) / 2.0, "weak ball")
    u0 = incident_field(x0, grid, kg).values
    us = solve_scattering(weak, kg, x0, grid, rtol=1e-12).values - u0
    born = born_term(weak, kg, x0, grid).values
    lin = np.linalg.norm(us - born) / np.linalg.norm(born)
    return [
        _below("Krylov vs dense Lippmann-Schwinger", rel, 1e-6, "n_x=11"),
        _below("Born linearity deviation", lin, 1e-3, f"contrast {eps:g}"),
    ]


# consistency ----------------------------------------------------------------

def consistency_suite(seed: int = 42) -> list[Check]:
    cfg = RunConfig(n_x=11, n_k=21, N=3)
    grid, kg = cfg.spatial_grid(), cfg.wavenumber_grid()
    basis = build_basis(kg, cfg.N)
    data, u = generate_data(get_phantom("ellipsoid5"), kg, cfg.x0, grid)
    u0 = incident_field(cfg.x0, grid, kg)
    lf = log_ratio(u, u0, kg)
    back = np.exp(kg.nodes**2 * lf.v) * u0.values
    rt = np.abs(back - u.values).max() / np.abs(u.values).max()
    # a ratio winding twice along k: naive principal branch jumps, unwrapped branch is continuous
    k = kg.nodes
    wind = 2.0 * np.exp(1j * (0.3 + 4 * np.pi * (k - k[0]) / (k[-1] - k[0])))
    lg, steps = unwrapped_log(wind)
    cont = np.abs(np.diff(lg.imag)).max()
    rt_w = np.abs(np.exp(lg) - wind).max() / np.abs(wind).max()

    bnd = assemble_boundary(data, u0, basis, grid, cfg.x0)
    V = spectral_project(lf, basis).coeffs
    two = np.abs(bnd.g1[:, :, :, 0] - V[:, :, :, 0]).max() / np.abs(V[:, :, :, 0]).max()

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg2 = RunConfig.loads(cfg.dumps())
        cfg_ok = cfg2 == cfg and cfg2.dumps() == cfg.dumps()
        noisy = add_noise(data, 0.1, seed)
        save_cauchy(tmp / "a", noisy)
        save_cauchy(tmp / "b", add_noise(data, 0.1, seed))
        same = all((tmp / "a" / f).read_bytes() == (tmp / "b" / f).read_bytes()
                   for f in ("f.bin", "g.bin", "meta.json"))
        back_data = load_cauchy(tmp / "a")
        io_ok = np.array_equal(back_data.f, noisy.f) and np.array_equal(back_data.g, noisy.g)
        write_tensor(tmp / "v.bin", V)
        io_ok = io_ok and np.array_equal(read_tensor(tmp / "v.bin"), V)

    return [
        _below("log round-trip", rt, 1e-8),
        _below("winding log round-trip", rt_w, 1e-8, f"{int(steps)} branch corrections"),
        Check("winding phase continuity (max step)", cont, np.pi, bool(cont < np.pi and steps == 2),
              f"branch corrections {int(steps)}"),
        _below("two-path boundary consistency", two, 1e-8),
        Check("config round-trip", 0.0 if cfg_ok else 1.0, 0.5, cfg_ok),
        Check("IO bit-reproducibility", 0.0 if (same and io_ok) else 1.0, 0.5, same and io_ok),
    ]


SUITES = {
    "basis": basis_suite,
    "gradient": gradient_suite,
    "contraction": contraction_suite,
    "carleman": carleman_suite,
    "forward": forward_suite,
    "consistency": consistency_suite,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [c for n in SUITES for c in SUITES[n]()]
    try:
        return SUITES[name]()
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'") from None


def report_json(checks: list[Check]) -> str:
    return json.dumps([c.__dict__ for c in checks], indent=2)
