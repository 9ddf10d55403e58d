"""Orthonormal exponential-polynomial basis on a wavenumber interval.

The seed functions are ``phi_m(k) = k**(m-1) * exp(k - kc)`` with ``kc`` the
midpoint of the interval.  They are orthonormalised in the discrete inner
product defined by the node quadrature, so every downstream integral
(projection, tensors, B fields) uses one consistent rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre
from scipy.special import bernoulli

# Endpoint-correction order of the uniform-grid rule.
QUAD_ORDER = 8


@dataclass(frozen=True)
class WavenumberGrid:
    k_min: float
    k_max: float
    n_k: int

    def __post_init__(self):
        if not (self.k_max > self.k_min > 0):
            raise ValueError(f"need k_max > k_min > 0, got [{self.k_min}, {self.k_max}]")
        if self.n_k < 2:
            raise ValueError("n_k must be at least 2")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.k_min, self.k_max, self.n_k)

    @property
    def step(self) -> float:
        return (self.k_max - self.k_min) / (self.n_k - 1)

    def refined(self, factor: int) -> "WavenumberGrid":
        return WavenumberGrid(self.k_min, self.k_max, factor * (self.n_k - 1) + 1)


def quadrature_weights(n: int, h: float, order: int = QUAD_ORDER) -> np.ndarray:
    """Composite trapezoid weights with Gregory endpoint corrections.

    Exact for polynomials of degree < ``order``; all weights stay positive
    for ``order <= 8``.  Falls back to lower orders on short grids.
    """
    order = min(order, n // 2)
    if order < 2:
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        return h * w
    # Euler-Maclaurin endpoint terms for a one-sided correction of length `order`
    bern = bernoulli(order + 1)
    j = np.arange(order, dtype=float)
    vander = np.vander(j, order, increasing=True).T
    rhs = np.zeros(order)
    rhs[0] = -0.5
    for q in range(1, order, 2):
        rhs[q] = bern[q + 1] / (q + 1)
    d = np.linalg.solve(vander, rhs)
    w = np.ones(n)
    w[:order] += d
    w[n - order:] += d[::-1]
    return h * w


@dataclass(frozen=True)
class BasisSet:
    """Sampled basis functions and their analytic derivatives on the k nodes.

    ``coeffs`` is lower triangular and maps the (Legendre-form) seeds to the
    basis, so ``derivs`` is the same combination of the seed derivatives.
    """

    grid: WavenumberGrid
    N: int
    values: np.ndarray
    derivs: np.ndarray
    quad_weights: np.ndarray
    coeffs: np.ndarray = field(repr=False)

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Quadrature of ``f * g`` along the last axis."""
        return (f * g) @ self.quad_weights


def seed_functions(k: np.ndarray, N: int, k_mid: float) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the raw seeds phi_1..phi_N at ``k``."""
    m = np.arange(N)[:, None]
    phi = k[None, :] ** m * np.exp(k - k_mid)[None, :]
    dphi = (m / k[None, :] + 1.0) * phi
    return phi, dphi


def _stable_seeds(grid: WavenumberGrid, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Legendre-times-exponential seeds spanning the same nested spaces as phi_m.

    Each seed has exact degree m-1 with positive leading coefficient, so
    Gram-Schmidt returns the same functions as for the monomial seeds while
    the Gram matrix stays well conditioned.
    """
    k = grid.nodes
    half = 0.5 * (grid.k_max - grid.k_min)
    k_mid = 0.5 * (grid.k_max + grid.k_min)
    t = (k - k_mid) / half
    ex = np.exp(k - k_mid)
    vals = np.empty((N, k.size))
    ders = np.empty((N, k.size))
    for m in range(N):
        c = np.zeros(m + 1)
        c[m] = 1.0
        p = legendre.legval(t, c)
        dp = legendre.legval(t, legendre.legder(c)) / half
        vals[m] = p * ex
        ders[m] = (dp + p) * ex
    return vals, ders


def gram_condition(grid: WavenumberGrid, N: int) -> float:
    seeds, _ = _stable_seeds(grid, N)
    w = quadrature_weights(grid.n_k, grid.step)
    return float(np.linalg.cond((seeds * w) @ seeds.T))


def build_basis(grid: WavenumberGrid, N: int, max_condition: float = 1e12) -> BasisSet:
    if N < 1:
        raise ValueError("N must be >= 1")
    if N > grid.n_k:
        raise ValueError(f"N={N} exceeds the number of k nodes ({grid.n_k})")
    cond = gram_condition(grid, N)
    if not np.isfinite(cond) or cond > max_condition:
        usable = max((n for n in range(1, N) if gram_condition(grid, n) <= max_condition), default=0)
        raise ValueError(
            f"Gram matrix of the seed functions is ill-conditioned (cond={cond:.3g}) "
            f"for N={N}; largest usable N is {usable}"
        )

    w = quadrature_weights(grid.n_k, grid.step)
    phi, dphi = _stable_seeds(grid, N)

    # Gram-Schmidt on the sampled functions, tracking the triangular combination.
    T = np.zeros((N, N))
    Q = np.zeros_like(phi)
    for m in range(N):
        q = phi[m].copy()
        t = np.zeros(N)
        t[m] = 1.0
        for _ in range(2):  # second pass restores orthogonality lost to rounding
            proj = (Q[:m] * w) @ q
            q -= proj @ Q[:m]
            t -= proj @ T[:m]
        nrm = np.sqrt(np.dot(q * w, q))
        Q[m] = q / nrm
        T[m] = t / nrm
    values = T @ phi
    derivs = T @ dphi
    return BasisSet(grid=grid, N=N, values=values, derivs=derivs, quad_weights=w, coeffs=T)


@dataclass(frozen=True)
class SpectralTensors:
    s: np.ndarray
    a: np.ndarray


def assemble_tensors(basis: BasisSet) -> SpectralTensors:
    """s[l, i] = int Psi_i' Psi_l and a[l, i, j] = 2 int (k^2 Psi_i Psi_j' + k Psi_i Psi_j) Psi_l."""
    k = basis.grid.nodes
    P, dP, w = basis.values, basis.derivs, basis.quad_weights
    s = np.einsum("lk,ik,k->li", P, dP, w)
    a = 2.0 * (
        np.einsum("lk,ik,jk,k->lij", P, P, dP, w * k**2)
        + np.einsum("lk,ik,jk,k->lij", P, P, P, w * k)
    )
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(a))):
        raise FloatingPointError("non-finite spectral tensor entries")
    return SpectralTensors(s=s, a=a)


def project(samples: np.ndarray, basis: BasisSet) -> np.ndarray:
    """Coefficients ``int f Psi_i dk`` for samples with k along the last axis.

    Returns an array with the k axis replaced by a basis axis of length N,
    moved to the front: shape ``(N, *samples.shape[:-1])``.
    """
    samples = np.asarray(samples)
    if samples.shape[-1] != basis.grid.n_k:
        raise ValueError(
            f"sample count {samples.shape[-1]} does not match n_k={basis.grid.n_k}"
        )
    coef = samples @ (basis.values * basis.quad_weights).T
    return np.moveaxis(coef, -1, 0)


def synthesize(coeffs: np.ndarray, basis: BasisSet, derivative: bool = False) -> np.ndarray:
    """Evaluate ``sum_i coeffs[i] Psi_i(k)`` (or its k-derivative) on the nodes.

    ``coeffs`` has the basis along axis 0; the result has k as last axis.
    """
    table = basis.derivs if derivative else basis.values
    return np.tensordot(np.moveaxis(coeffs, 0, -1), table, axes=([-1], [0]))
