"""Carleman weights, finite-difference operators and the quasi-reversibility start.

Unknown fields live on every lattice node (flattened in C order of
(x, y, z)); boundary nodes carry Dirichlet values and are never free.
Residual rows are the interior nodes.  The Neumann condition on the face
z = -R is a set of penalty rows built from the one-sided second-order
stencil along the outward normal -z.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .forward import SpatialGrid

log = logging.getLogger(__name__)

EXP_GUARD = 700.0


@dataclass(frozen=True)
class CarlemanWeight:
    lam: float
    r: float
    form: str = "scaled_minus"  # "plus": exp(lam (z + r)^2); "scaled_minus": exp(lam((z - r)^2 - (R + r)^2))
    squared_in_functional: bool = True

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.form not in ("plus", "scaled_minus"):
            raise ValueError(f"unknown weight form {self.form!r}")
        if self.form == "plus" and self.lam > 0 and self.r <= 1:
            raise ValueError("the plus form needs r > 1")

    def exponent(self, z: np.ndarray, R: float) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.form == "plus":
            return self.lam * (z + self.r) ** 2
        return self.lam * ((z - self.r) ** 2 - (R + self.r) ** 2)


def weight_field(w: CarlemanWeight, grid: SpatialGrid) -> np.ndarray:
    """mu_lambda on the lattice, shape (n, n, n)."""
    z = grid.coords
    ex = w.exponent(z, grid.R)
    if np.any(np.abs(ex) > EXP_GUARD):
        raise OverflowError(
            f"Carleman exponent reaches {np.abs(ex).max():.1f} (> {EXP_GUARD}); "
            "reduce lambda or rescale the domain"
        )
    mu = np.exp(ex)
    return np.broadcast_to(mu[None, None, :], grid.shape).copy()


def _diff1(n: int, h: float) -> sp.csr_matrix:
    """Central first difference, rows 1..n-2 of an n-point line."""
    return sp.diags([-1.0, 1.0], [0, 2], shape=(n - 2, n)).tocsr() / (2 * h)


def _diff2(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n)).tocsr() / h**2


def _restrict_rows(n: int) -> sp.csr_matrix:
    return sp.eye(n, format="csr")[1:-1]


@dataclass
class DiscreteOperators:
    """Sparse difference operators mapping all lattice nodes to interior rows."""

    grid: SpatialGrid
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n_x

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.grid.boundary_mask().ravel())

    @cached_property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.grid.boundary_mask().ravel())

    @cached_property
    def face(self) -> np.ndarray:
        """Flat indices of the measurement face z = -R minus its edges."""
        idx = np.arange(self.n**3).reshape(self.grid.shape)
        return idx[1:-1, 1:-1, 0].ravel()

    def _axis(self, one_d: sp.spmatrix, axis: int) -> sp.csr_matrix:
        n = self.n
        mats = [_restrict_rows(n)] * 3
        mats[axis] = one_d
        return sp.kron(sp.kron(mats[0], mats[1]), mats[2], format="csr")

    @cached_property
    def grad(self) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        h = self.grid.h
        return tuple(self._axis(_diff1(self.n, h), d) for d in range(3))

    @cached_property
    def second(self) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
        h = self.grid.h
        return tuple(self._axis(_diff2(self.n, h), d) for d in range(3))

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return (self.second[0] + self.second[1] + self.second[2]).tocsr()

    def mixed(self, a: int, b: int) -> sp.csr_matrix:
        """Central d^2/(dx_a dx_b), a != b, on interior rows."""
        key = ("mixed", min(a, b), max(a, b))
        if key not in self._cache:
            h, n = self.grid.h, self.n
            mats = [_restrict_rows(n)] * 3
            mats[a] = _diff1(n, h)
            mats[b] = _diff1(n, h)
            self._cache[key] = sp.kron(sp.kron(mats[0], mats[1]), mats[2], format="csr")
        return self._cache[key]

    @cached_property
    def neumann(self) -> sp.csr_matrix:
        """Outward normal derivative -d/dz on the face, one-sided O(h^2)."""
        n, h = self.n, self.grid.h
        rows = np.arange(self.face.size)
        r = np.concatenate([rows] * 3)
        c = np.concatenate([self.face, self.face + 1, self.face + 2])
        v = np.concatenate([np.full(rows.size, 3.0), np.full(rows.size, -4.0),
                            np.full(rows.size, 1.0)]) / (2 * h)
        return sp.csr_matrix((v, (r, c)), shape=(self.face.size, n**3))

    def interior_values(self, field: np.ndarray) -> np.ndarray:
        return field.reshape(*field.shape[:-3], -1)[..., self.interior]


@dataclass
class CarlemanReport:
    lams: list
    constants: list
    stable: bool
    floor: float

    def __str__(self) -> str:
        rows = ", ".join(f"lam={l:g}: C={c:.4g}" for l, c in zip(self.lams, self.constants))
        return f"Carleman fit [{rows}] stable={self.stable}"


def carleman_terms(phi: np.ndarray, mu: np.ndarray, lam: float, ops: DiscreteOperators):
    """(LHS, RHS) of the Carleman inequality with unit constant, by lattice quadrature."""
    h3 = ops.grid.h ** 3
    x = phi.ravel()
    m = ops.interior_values(mu)
    lap = ops.laplacian @ x
    lhs = h3 * np.sum(m * np.abs(lap) ** 2)
    hess = sum(np.abs(D @ x) ** 2 for D in ops.second)
    hess = hess + 2 * sum(np.abs(ops.mixed(a, b) @ x) ** 2 for a, b in ((0, 1), (0, 2), (1, 2)))
    grad2 = sum(np.abs(D @ x) ** 2 for D in ops.grad)
    val2 = np.abs(ops.interior_values(phi)) ** 2
    rhs = h3 * np.sum(m * (hess / lam + lam * grad2 + lam**3 * val2))
    return float(lhs), float(rhs)


def check_sample(phi: np.ndarray, ops: DiscreteOperators, neumann_tol: float = 0.05) -> bool:
    scale = np.abs(phi).max()
    if scale == 0:
        return True
    flat = phi.ravel()
    if np.abs(flat[ops.boundary]).max() > 1e-12 * scale:
        return False
    dn = ops.neumann @ flat
    return bool(np.abs(dn).max() * ops.grid.h <= neumann_tol * scale)


def verify_carleman(
    w: CarlemanWeight,
    lams,
    samples,
    grid: SpatialGrid,
    floor: float = 1e-8,
) -> CarlemanReport:
    """Fit the largest C with LHS >= C * RHS over ``samples`` for each lambda.

    Empirical only: the fit says nothing about fields outside the sample set.
    ``stable`` requires every fitted C above ``floor`` on the upper half of
    the lambda list and no collapse there (min/max ratio >= 0.1).
    """
    ops = DiscreteOperators(grid)
    for i, phi in enumerate(samples):
        if not check_sample(phi, ops):
            raise ValueError(f"sample {i} violates the boundary conditions of the estimate")
    lams = list(lams)
    consts = []
    for lam in lams:
        mu = weight_field(CarlemanWeight(lam, w.r, w.form), grid)
        ratios = []
        for phi in samples:
            lhs, rhs = carleman_terms(phi, mu, lam, ops)
            if rhs > 0:
                ratios.append(lhs / rhs)
        consts.append(min(ratios) if ratios else np.inf)
    upper = np.array(consts[len(consts) // 2:])
    finite = upper[np.isfinite(upper)]
    stable = bool(finite.size == 0 or (finite.min() > floor and finite.min() >= 0.1 * finite.max()))
    return CarlemanReport(lams, consts, stable, floor)


@dataclass
class QRInfo:
    residual: float
    n_unknowns: int
    iterations: int = 0
    history: list = field(default_factory=list)


def h2_gram(ops: DiscreteOperators) -> sp.csr_matrix:
    """Gram matrix (over all nodes) of the discrete H^2 norm without the h^3 factor."""
    n3 = ops.n**3
    G = sp.eye(n3, format="csr")
    for D in ops.grad:
        G = G + D.T @ D
    L = ops.laplacian
    return (G + L.T @ L).tocsr()


@dataclass
class QRSystem:
    """Normal equations M x = b of the quasi-reversibility problem over free nodes."""

    M: sp.csr_matrix
    b: np.ndarray
    free: np.ndarray
    vb: np.ndarray  # boundary values, zeros elsewhere, shape (N, n^3)
    preconditioner: "LayeredPreconditioner | None" = None


def qr_system(s, B, bnd, w: CarlemanWeight, eps: float, grid: SpatialGrid,
              neumann_weight: float = 1.0) -> QRSystem:
    if eps <= 0:
        raise ValueError("eps must be positive")
    ops = DiscreteOperators(grid)
    N = s.shape[0]
    n3 = grid.n_x**3
    h = grid.h
    mu = weight_field(w, grid).ravel()
    mu2 = mu**2 if w.squared_in_functional else mu
    Bint = np.asarray(B.B if hasattr(B, "B") else B).reshape(N, N, n3, 3)[:, :, ops.interior, :]

    sq_int = sp.diags(np.sqrt(h**3 * mu2[ops.interior]))
    L = ops.laplacian
    blocks = [[None] * N for _ in range(N)]
    for l in range(N):
        for i in range(N):
            blk = s[l, i] * L
            for d in range(3):
                blk = blk + sp.diags(Bint[l, i, :, d]) @ ops.grad[d]
            blocks[l][i] = sq_int @ blk
    A_res = sp.bmat(blocks, format="csr")

    sq_face = np.sqrt(neumann_weight * h**2 * mu2[ops.face])
    A_neu = sp.kron(sp.eye(N), sp.diags(sq_face) @ ops.neumann, format="csr")
    b_neu = (sq_face[None, :] * bnd.g0[:, 1:-1, 1:-1].reshape(N, -1)).ravel()

    sq_eps = np.sqrt(eps * h**3)
    reg = sp.vstack([sp.eye(n3)] + list(ops.grad) + [L]) * sq_eps
    A_reg = sp.kron(sp.eye(N), reg, format="csr")

    A = sp.vstack([A_res, A_neu, A_reg], format="csc")
    g1 = bnd.g1.reshape(N, n3)
    vb = np.zeros((N, n3), dtype=complex)
    vb[:, ops.boundary] = g1[:, ops.boundary]
    rhs = np.concatenate([np.zeros(A_res.shape[0]), b_neu, np.zeros(A_reg.shape[0])])
    rhs = rhs - A @ vb.ravel()

    free = (np.arange(N)[:, None] * n3 + ops.interior[None, :]).ravel()
    Af = A[:, free]
    AH = Af.conj().T.tocsr()
    pre = layered_metric(s, B, w, eps, grid, neumann_weight)
    return QRSystem(M=(AH @ Af).tocsr(), b=AH @ rhs, free=free, vb=vb, preconditioner=pre)


def layered_metric(s, B, w: CarlemanWeight, eps: float, grid: SpatialGrid,
                   neumann_weight: float = 1.0) -> "LayeredPreconditioner":
    """Layered approximation of the quasi-reversibility normal matrix, B replaced by its x-y mean."""
    N, n, m = s.shape[0], grid.n_x, grid.n_x - 2
    Bz = np.asarray(B.B if hasattr(B, "B") else B)[:, :, 1:-1, 1:-1, 1:-1, 2].mean(axis=(2, 3))
    mu = weight_field(w, grid)[0, 0]
    mu2z = mu**2 if w.squared_in_functional else mu
    return LayeredPreconditioner(s, Bz, mu2z[1:-1], eps, grid.h, n, neumann_weight, mu2z[0])


class LayeredPreconditioner:
    """Exact inverse of the normal matrix with B replaced by its x-y average of B_z.

    With the weight depending on z only, type-I sine transforms diagonalise
    the interior Dirichlet Laplacian across x and y, leaving one dense
    (N m) x (N m) block per (x, y) mode.  The grad^T grad part of the
    regulariser across x and y is replaced by its sine-transform symbol.
    """

    def __init__(self, s, Bz, mu2_z, eps, h, n, neumann_weight, face_mu2):
        m = n - 2
        N = s.shape[0]
        self.m, self.N = m, N
        p = np.arange(1, m + 1)
        lam = -4.0 / h**2 * np.sin(np.pi * p / (2 * (m + 1))) ** 2
        gsym = np.sin(np.pi * p / (m + 1)) ** 2 / h**2
        I = np.eye(m)
        Dzz = (np.diag(np.full(m, -2.0)) + np.diag(np.ones(m - 1), 1) + np.diag(np.ones(m - 1), -1)) / h**2
        Dz = (np.diag(np.ones(m - 1), 1) - np.diag(np.ones(m - 1), -1)) / (2 * h)
        sw = np.sqrt(h**3 * mu2_z)[:, None]
        nz = np.zeros(m)
        nz[:2] = -4.0 / (2 * h), 1.0 / (2 * h)
        Kn = neumann_weight * h**2 * face_mu2 * np.outer(nz, nz)
        BD = np.einsum("liz,zw->lizw", Bz, Dz)
        self.inv = np.empty((m, m, N * m, N * m), dtype=complex)
        for a in range(m):
            for b in range(m):
                Lz = (lam[a] + lam[b]) * I + Dzz
                A = ((s[:, :, None, None] * Lz + BD) * sw).transpose(0, 2, 1, 3).reshape(N * m, N * m)
                K2 = eps * h**3 * ((1 + gsym[a] + gsym[b]) * I + Dz.T @ Dz + Lz.T @ Lz) + Kn
                self.inv[a, b] = np.linalg.inv(A.conj().T @ A + np.kron(np.eye(N), K2))

    def apply(self, r: np.ndarray) -> np.ndarray:
        N, m = self.N, self.m
        R = sfft.dstn(r.reshape(N, m, m, m), type=1, axes=(1, 2), norm="ortho")
        R = R.transpose(1, 2, 0, 3).reshape(m, m, N * m)
        R = np.einsum("abij,abj->abi", self.inv, R)
        R = R.reshape(m, m, N, m).transpose(2, 0, 1, 3)
        return sfft.idstn(R, type=1, axes=(1, 2), norm="ortho").ravel()

    def solve(self, r: np.ndarray) -> np.ndarray:
        """Apply the inverse to an array shaped (N, n_interior)."""
        return self.apply(r.ravel()).reshape(r.shape)

    def operator(self) -> LinearOperator:
        size = self.N * self.m**3
        return LinearOperator((size, size), matvec=self.apply, dtype=complex)


def solve_normal(system: QRSystem, rtol: float = 1e-10, maxiter: int = 5000,
                 tol: float = 1e-8) -> tuple[np.ndarray, QRInfo]:
    """Preconditioned conjugate gradients on the Hermitian normal equations."""
    M, b = system.M, system.b
    hist = []
    nb = np.linalg.norm(b)
    if nb == 0:
        return np.zeros_like(b), QRInfo(0.0, b.size)
    pre = system.preconditioner.operator() if system.preconditioner is not None else None
    x, code = cg(M, b, rtol=rtol, atol=0.0, maxiter=maxiter, M=pre,
                 callback=lambda xk: hist.append(float(np.linalg.norm(M @ xk - b) / nb))
                 if len(hist) % 10 == 0 else hist.append(np.nan))
    res = float(np.linalg.norm(M @ x - b) / nb)
    info = QRInfo(residual=res, n_unknowns=int(b.size), iterations=len(hist),
                  history=[h for h in hist if np.isfinite(h)])
    if code < 0 or not np.isfinite(res) or res > tol:
        raise np.linalg.LinAlgError(
            f"quasi-reversibility CG failed after {len(hist)} iterations, "
            f"normal-equation residual {res:.3e}; history {info.history[-5:]}")
    return x, info


def qr_initialize(
    s: np.ndarray,
    B,
    bnd,
    w: CarlemanWeight,
    eps: float,
    grid: SpatialGrid,
    neumann_weight: float = 1.0,
    return_info: bool = False,
):
    """Quasi-reversibility solution of the linearised system with Cauchy data.

    Minimises
        h^3 sum_int mu^2 |sum_i s_li lap v_i + sum_i B_li . grad v_i|^2
        + neumann_weight h^2 sum_face mu^2 |d_nu v_l - g0_l|^2 + eps |V|_{H^2}^2
    over fields equal to g1 on the boundary.  Returns coefficients of shape
    (N, n, n, n) (and a :class:`QRInfo` when ``return_info``).
    """
    from .transform import SpectralField

    system = qr_system(s, B, bnd, w, eps, grid, neumann_weight)
    x, info = solve_normal(system)
    N = s.shape[0]
    V = system.vb.copy()
    V.reshape(-1)[system.free] = x
    out = SpectralField(V.reshape(N, *grid.shape))
    log.info("qr_initialize: %d unknowns, residual %.2e", system.free.size, info.residual)
    if return_info:
        return out, info
    return out
