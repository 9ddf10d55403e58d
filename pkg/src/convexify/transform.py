"""Change of variables v = k^-2 log(u/u0), spectral truncation, problem data.

All spatial arrays use the lattice layout (n_x, n_x, n_x); spectral fields
carry the basis index first, ``coeffs.shape == (N, n_x, n_x, n_x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSet, WavenumberGrid, project
from .forward import CauchyData, ComplexField, SpatialGrid

# |u| below this is treated as a violation of the nonvanishing assumption
MIN_ABS = 1e-12


@dataclass
class LogField:
    v: np.ndarray
    unwrap_info: np.ndarray  # net 2*pi branch corrections per spatial point


@dataclass
class SpectralField:
    coeffs: np.ndarray

    @property
    def N(self) -> int:
        return self.coeffs.shape[0]


@dataclass
class BoundaryVectors:
    """Dirichlet data g1 on all of the boundary and Neumann data g0 on z = -R.

    ``g1`` has the full lattice shape (N, n, n, n) with zeros away from the
    boundary and on the boundary outside the measurement face; ``g0`` has
    shape (N, n, n).
    """

    g1: np.ndarray
    g0: np.ndarray


@dataclass
class BTensor:
    """B[l, i, x, y, z, d]: vector field multiplying grad v_i in equation l."""

    B: np.ndarray


def unwrapped_log(ratio: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Complex log continuous along the last axis, principal branch at the last node.

    Returns ``(log, branch_count)``; the count is the net number of 2*pi
    corrections relative to the principal branch, summed over nodes.
    """
    amp = np.abs(ratio)
    if np.any(amp < MIN_ABS):
        raise ValueError(
            "total field vanishes (|u/u0| < 1e-12); the nonvanishing assumption "
            "on the total wave is violated"
        )
    phase = np.angle(ratio)
    # unwrap from the top node downwards so the anchor keeps its principal value
    unwrapped = np.unwrap(phase[..., ::-1], axis=-1)[..., ::-1]
    jumps = np.rint((unwrapped - phase) / (2 * np.pi))
    steps = np.abs(np.diff(jumps, axis=-1)).sum(axis=-1)
    return np.log(amp) + 1j * unwrapped, steps


def log_ratio(u: ComplexField, u0: ComplexField, kgrid: WavenumberGrid) -> LogField:
    k = kgrid.nodes
    lg, info = unwrapped_log(u.values / u0.values)
    return LogField(v=lg / k**2, unwrap_info=info)


def spectral_project(v: LogField | np.ndarray, basis: BasisSet) -> SpectralField:
    vals = v.v if isinstance(v, LogField) else v
    return SpectralField(project(vals, basis))


def _normal_log_derivative_u0(x0, grid: SpatialGrid, kgrid: WavenumberGrid) -> np.ndarray:
    """d_nu u0 / u0 on the face z = -R (outward normal -z), shape (n, n, n_k)."""
    c = grid.coords
    X, Y = np.meshgrid(c, c, indexing="ij")
    z = -grid.R
    rho = np.sqrt((X - x0[0]) ** 2 + (Y - x0[1]) ** 2 + (z - x0[2]) ** 2)
    dnu_rho = -(z - x0[2]) / rho
    k = kgrid.nodes
    return (1j * k - 1.0 / rho[..., None]) * dnu_rho[..., None]


def assemble_boundary(
    data: CauchyData, u0: ComplexField, basis: BasisSet, grid: SpatialGrid, x0
) -> BoundaryVectors:
    kgrid = basis.grid
    k = kgrid.nodes
    f, g = data.f, data.g
    if np.any(np.abs(f) < MIN_ABS):
        raise ValueError("Dirichlet data vanish on the measurement face")
    u0_face = u0.values[:, :, 0, :]
    lg, _ = unwrapped_log(f / u0_face)
    g1_face = project(lg / k**2, basis)
    dnu = (g / f - _normal_log_derivative_u0(x0, grid, kgrid)) / k**2
    g0 = project(dnu, basis)

    n = grid.n_x
    g1 = np.zeros((basis.N, n, n, n), dtype=complex)
    g1[:, :, :, 0] = g1_face
    # the face edges belong to the side faces as well; data are kept there
    return BoundaryVectors(g1=g1, g0=g0)


def direction_field(x0, grid: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors (x - x0)/rho, shape (3, n, n, n), and rho."""
    X, Y, Z = grid.mesh()
    d = np.stack([X - x0[0], Y - x0[1], Z - x0[2]])
    rho = np.sqrt((d**2).sum(axis=0))
    return d / rho, rho


def assemble_B(u0: ComplexField | None, basis: BasisSet, kgrid: WavenumberGrid,
               grid: SpatialGrid, x0) -> BTensor:
    """B_li = 2 int (Psi_i' grad(u0)/u0 + Psi_i d_k[grad(u0)/u0]) Psi_l dk.

    Uses grad(u0)/u0 = (ik - 1/rho) e and d_k of it = i e with e = (x - x0)/rho,
    so only k-moments of the basis are needed; ``u0`` is accepted for
    interface symmetry and not sampled.
    """
    k = kgrid.nodes
    P, dP, w = basis.values, basis.derivs, basis.quad_weights
    s = np.einsum("ik,lk,k->li", dP, P, w)
    k1 = np.einsum("ik,lk,k->li", dP, P, w * k)
    m0 = np.einsum("ik,lk,k->li", P, P, w)
    e, rho = direction_field(x0, grid)
    scalar = 2.0 * (1j * (k1 + m0)[:, :, None, None, None] - s[:, :, None, None, None] / rho)
    B = scalar[..., None] * np.moveaxis(e, 0, -1)[None, None]
    return BTensor(B)
