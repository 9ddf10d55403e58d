"""Convexified least-squares functional, its gradient, and the reconstruction pipeline.

The residual of equation l at an interior node is

    r_l = sum_i s_li lap v_i + sum_ij a_lij grad v_i . grad v_j + sum_i B_li . grad v_i

(the three terms sum to zero for an exact solution).  With mu the Carleman
weight the discrete functional is

    J = h^3 sum_int mu^2 sum_l |r_l|^2
        + w_N h^2 sum_face mu^2 sum_l |d_nu v_l - g0_l|^2
        + eps h^3 sum_l (sum_all |v_l|^2 + sum_int |grad v_l|^2 + |lap v_l|^2).

Boundary nodes hold the Dirichlet data; the free unknowns are interior
nodes.  Complex unknowns are differentiated through their real/imaginary
split, which makes the gradient ``Jac^H (2 w r)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import optim
from .basis import BasisSet, SpectralTensors, assemble_tensors, build_basis, synthesize
from .carleman import (CarlemanWeight, DiscreteOperators, h2_gram, layered_metric,
                       qr_initialize, weight_field)
from .forward import CauchyData, SpatialGrid, incident_field
from .transform import (BoundaryVectors, BTensor, SpectralField, assemble_B,
                        assemble_boundary, direction_field)

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage: str, err: Exception):
        super().__init__(f"[{stage}] {type(err).__name__}: {err}")
        self.stage = stage
        self.cause = err


@dataclass
class FunctionalSpec:
    tensors: SpectralTensors
    B: BTensor
    weight: CarlemanWeight
    grid: SpatialGrid
    boundary: BoundaryVectors
    eps: float = 1e-6
    neumann_weight: float = 1.0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        N = self.tensors.s.shape[0]
        if self.B.B.shape[:2] != (N, N) or self.boundary.g1.shape[0] != N:
            raise ValueError("inconsistent basis sizes between tensors, B and boundary data")


class DiscreteFunctional:
    """Precomputed evaluator of J and its gradient over the free unknowns.

    Free vectors are complex arrays of shape (N, n_interior).
    """

    def __init__(self, spec: FunctionalSpec):
        self.spec = spec
        g = spec.grid
        self.ops = ops = DiscreteOperators(g)
        self.N = N = spec.tensors.s.shape[0]
        self.n3 = g.n_x**3
        h = g.h
        mu = weight_field(spec.weight, g).ravel()
        mu2 = mu**2 if spec.weight.squared_in_functional else mu
        self.w_int = h**3 * mu2[ops.interior]
        self.w_face = spec.neumann_weight * h**2 * mu2[ops.face]
        self.reg = spec.eps * h**3
        self.s = spec.tensors.s
        self.a = spec.tensors.a
        self.a_sym = self.a + np.transpose(self.a, (0, 2, 1))
        self.Bint = np.ascontiguousarray(
            np.moveaxis(spec.B.B.reshape(N, N, self.n3, 3)[:, :, ops.interior, :], 3, 2))  # (l, i, d, x)
        self.g0 = spec.boundary.g0[:, 1:-1, 1:-1].reshape(N, -1)
        self.vb = np.zeros((N, self.n3), dtype=complex)
        g1 = spec.boundary.g1.reshape(N, self.n3)
        self.vb[:, ops.boundary] = g1[:, ops.boundary]
        self.L = ops.laplacian
        self.LT = self.L.T.tocsr()
        self.D = ops.grad
        self.DT = tuple(Dd.T.tocsr() for Dd in ops.grad)
        self.NT = ops.neumann.T.tocsr()
        self._gram = None

    # free <-> full
    def full(self, x: np.ndarray) -> np.ndarray:
        V = self.vb.copy()
        V[:, self.ops.interior] = x
        return V

    def free(self, V: np.ndarray) -> np.ndarray:
        return V.reshape(self.N, self.n3)[:, self.ops.interior].copy()

    @property
    def gram(self):
        if self._gram is None:
            self._gram = h2_gram(self.ops)
        return self._gram

    def h2_norm(self, V: np.ndarray) -> float:
        """Discrete H^2 norm of a full field (N, n^3)."""
        V = V.reshape(self.N, self.n3)
        G = self.gram
        return float(np.sqrt(self.spec.grid.h**3 * np.real(np.sum(V.conj() * (G @ V.T).T))))

    def free_h2_norm(self, x: np.ndarray) -> float:
        V = np.zeros((self.N, self.n3), dtype=complex)
        V[:, self.ops.interior] = x
        return self.h2_norm(V)

    def _pieces(self, V: np.ndarray, nonlinear: bool = True):
        VT = V.T
        LV = (self.L @ VT).T
        Dv = np.stack([(Dd @ VT).T for Dd in self.D])  # (d, i, x)
        r = self.s @ LV + np.einsum("lidx,dix->lx", self.Bint, Dv)
        if nonlinear:
            Q = np.einsum("dix,djx->ijx", Dv, Dv)
            r = r + np.tensordot(self.a, Q, axes=([1, 2], [0, 1]))
        rn = (self.ops.neumann @ VT).T - self.g0
        return LV, Dv, r, rn

    def value(self, x: np.ndarray, nonlinear: bool = True) -> float:
        V = self.full(x)
        LV, Dv, r, rn = self._pieces(V, nonlinear)
        J = np.sum(self.w_int * np.abs(r) ** 2) + np.sum(self.w_face * np.abs(rn) ** 2)
        J += self.reg * (np.sum(np.abs(V) ** 2) + np.sum(np.abs(Dv) ** 2) + np.sum(np.abs(LV) ** 2))
        return float(J)

    def gradient(self, x: np.ndarray, nonlinear: bool = True) -> np.ndarray:
        V = self.full(x)
        LV, Dv, r, rn = self._pieces(V, nonlinear)
        rho = 2.0 * self.w_int * r
        # coefficient of grad(dv_i) in the linearised residual of equation l
        C = self.Bint
        if nonlinear:
            C = C + np.einsum("lij,djx->lidx", self.a_sym, Dv)
        g_lap = self.s.T @ rho  # (i, x)
        g = (self.LT @ g_lap.T).T
        proj = np.einsum("lidx,lx->dix", C.conj(), rho)
        for d in range(3):
            g = g + (self.DT[d] @ proj[d].T).T
        g = g + (self.NT @ (2.0 * self.w_face * rn).T).T
        # regularisation
        reg = V + (self.LT @ LV.T).T
        for d in range(3):
            reg = reg + (self.DT[d] @ Dv[d].T).T
        g = g + 2.0 * self.reg * reg
        return g[:, self.ops.interior]


def evaluate_J(V: SpectralField, spec: FunctionalSpec) -> float:
    F = DiscreteFunctional(spec)
    val = F.value(F.free(V.coeffs))
    if not np.isfinite(val):
        raise FloatingPointError("non-finite objective value")
    return val


def gradient_J(V: SpectralField, spec: FunctionalSpec) -> SpectralField:
    """Gradient with respect to the interior unknowns; zero on boundary nodes."""
    F = DiscreteFunctional(spec)
    g = F.gradient(F.free(V.coeffs))
    bad = np.argwhere(~np.isfinite(g))
    if bad.size:
        raise FloatingPointError(f"non-finite gradient at unknown {tuple(bad[0])}")
    out = np.zeros((F.N, F.n3), dtype=complex)
    out[:, F.ops.interior] = g
    return SpectralField(out.reshape(V.coeffs.shape))


@dataclass
class CRecovery:
    c: np.ndarray
    imag_ratio: float  # mean |Im c_k| / mean |Re c_k - 1| over interior nodes


def recover_c(V: SpectralField, basis: BasisSet, grid: SpatialGrid, x0,
              policy: str = "mean", return_diagnostics: bool = False):
    """c = 1 - [lap v + k^2 grad v . grad v + 2 grad v . grad u0/u0], real part, clamped >= 1.

    ``policy="mean"`` averages over all k nodes; ``"kmax"`` uses the top node.
    """
    ops = DiscreteOperators(grid)
    N = V.N
    Vf = V.coeffs.reshape(N, -1)
    LV = (ops.laplacian @ Vf.T).T
    Dv = np.stack([(D @ Vf.T).T for D in ops.grad])
    k = basis.grid.nodes
    lap_v = synthesize(LV, basis)
    grad_v = np.stack([synthesize(Dv[d], basis) for d in range(3)])
    e, rho = direction_field(x0, grid)
    e = e.reshape(3, -1)[:, ops.interior]
    rho = rho.ravel()[ops.interior]
    glog = (1j * k[None, :] - 1.0 / rho[:, None])[None] * e[:, :, None]
    ck = 1.0 - (lap_v + k**2 * np.sum(grad_v**2, axis=0) + 2.0 * np.sum(grad_v * glog, axis=0))
    if policy == "mean":
        cint = ck.mean(axis=1)
    elif policy == "kmax":
        cint = ck[:, -1]
    else:
        raise ValueError(f"unknown policy {policy!r}")
    c = np.ones(grid.n_x**3)
    c[ops.interior] = np.maximum(cint.real, 1.0)
    c = c.reshape(grid.shape)
    if not return_diagnostics:
        return c
    denom = np.mean(np.abs(cint.real - 1.0)) or 1.0
    return CRecovery(c, float(np.mean(np.abs(cint.imag)) / denom))


def _centroid(field: np.ndarray, grid: SpatialGrid, frac: float = 0.5) -> np.ndarray:
    excess = field - 1.0
    top = excess.max()
    if top <= 0:
        return np.full(3, np.nan)
    wts = np.where(excess >= frac * top, excess, 0.0)
    X = grid.mesh()
    return np.array([np.sum(wts * c) / wts.sum() for c in X])


def error_metrics(c_comp: np.ndarray, c_true: np.ndarray, grid: Optional[SpatialGrid] = None) -> dict:
    """Max-value relative error plus target-region and whole-domain errors.

    The relative error is |max c_comp - max c_true| / max c_true.  The
    target region is where c_true > 1; the centroids use the half-maximum
    level set of c - 1.
    """
    c_comp = np.asarray(c_comp, dtype=float)
    c_true = np.asarray(c_true, dtype=float)
    mc, mt = float(c_comp.max()), float(c_true.max())
    out = {"max_c": mc, "true_max_c": mt, "relative_error_max_c": abs(mc - mt) / mt}
    if c_comp.shape == c_true.shape and c_comp.ndim == 3:
        target = c_true > 1.0
        h3 = grid.h**3 if grid is not None else 1.0
        out["l2_error_in_target"] = float(np.sqrt(h3 * np.sum((c_comp - c_true)[target] ** 2))) if target.any() else 0.0
        out["l2_error"] = float(np.sqrt(h3 * np.sum((c_comp - c_true) ** 2)))
        if grid is not None and target.any():
            ct, cc = _centroid(c_true, grid), _centroid(c_comp, grid)
            out["true_centroid"] = ct.tolist()
            out["centroid"] = cc.tolist()
            out["centroid_offset"] = float(np.linalg.norm(cc - ct))
            out["centroid_offset_in_h"] = out["centroid_offset"] / grid.h
    return out


@dataclass
class ReconstructionResult:
    V: SpectralField
    c: np.ndarray
    trace: optim.DescentTrace
    metrics: dict = field(default_factory=dict)
    params_echo: dict = field(default_factory=dict)
    V0: Optional[SpectralField] = None


@dataclass
class Problem:
    """Everything assembled from data before minimisation."""

    basis: BasisSet
    tensors: SpectralTensors
    spec: FunctionalSpec


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except StageError:
        raise
    except Exception as err:  # tag and re-raise with stage context
        raise StageError(name, err) from err


def assemble_problem(data: CauchyData, cfg) -> Problem:
    grid = cfg.spatial_grid()
    kgrid = cfg.wavenumber_grid()
    basis = _stage("basis", build_basis, kgrid, cfg.N)
    tensors = _stage("tensors", assemble_tensors, basis)
    u0 = _stage("incident", incident_field, cfg.x0, grid, kgrid)
    bnd = _stage("boundary", assemble_boundary, data, u0, basis, grid, cfg.x0)
    B = _stage("B", assemble_B, u0, basis, kgrid, grid, cfg.x0)
    spec = FunctionalSpec(tensors=tensors, B=B, weight=cfg.weight(), grid=grid,
                          boundary=bnd, eps=cfg.eps, neumann_weight=cfg.neumann_weight)
    return Problem(basis, tensors, spec)


def initialize(problem: Problem, eps: Optional[float] = None) -> SpectralField:
    """Quasi-reversibility start; ``eps`` overrides the functional's regularisation."""
    sp_ = problem.spec
    return _stage("init", qr_initialize, sp_.tensors.s, sp_.B, sp_.boundary, sp_.weight,
                  sp_.eps if eps is None else eps, sp_.grid, neumann_weight=sp_.neumann_weight)


def descent_metric(problem: Problem, kind: str):
    """Inverse Gram operator of the inner product in which the gradient is taken.

    ``"h2"`` is the layered discrete H^2 product, ``"linearized"`` the
    Carleman-weighted normal operator of the linearised problem (plus the
    H^2 regulariser).  ``"euclidean"`` returns None.
    """
    sp_ = problem.spec
    N = sp_.tensors.s.shape[0]
    if kind == "euclidean":
        return None
    if kind == "h2":
        zero_B = np.zeros_like(sp_.B.B[:, :, :1, :1, :1])
        zero_B = np.broadcast_to(zero_B, sp_.B.B.shape)
        pre = layered_metric(np.zeros((N, N)), zero_B, sp_.weight, 1.0, sp_.grid, 0.0)
    elif kind == "linearized":
        pre = layered_metric(sp_.tensors.s, sp_.B, sp_.weight, sp_.eps, sp_.grid, sp_.neumann_weight)
    else:
        raise ValueError(f"unknown descent metric {kind!r}")
    return pre.solve


def minimize(problem: Problem, V0: SpectralField, cfg) -> tuple[SpectralField, optim.DescentTrace, dict]:
    F = DiscreteFunctional(problem.spec)
    x0 = F.free(V0.coeffs)
    meta = {"descent_metric": cfg.descent_metric}
    if cfg.max_iter == 0:
        return V0, optim.DescentTrace(), meta
    riesz = _stage("descent", descent_metric, problem, cfg.descent_metric)
    if cfg.eta is None:
        safe = _stage("descent", optim.backtracked_step, F.value, F.gradient, x0, riesz=riesz)
        eta = cfg.eta_fraction * safe
        meta.update(eta_backtracked=safe, eta=eta, eta_source="auto")
    else:
        eta = cfg.eta
        meta.update(eta=eta, eta_source="config")
    ball = optim.BallConstraint(cfg.ball_radius if cfg.ball_radius is not None else np.inf)
    dcfg = optim.DescentConfig(eta=eta, max_iter=cfg.max_iter, tol=cfg.tol, ball=ball)
    x, trace = _stage("descent", optim.descend, F.value, F.gradient, x0, dcfg,
                      norm=F.free_h2_norm, riesz=riesz)
    meta["monotone"] = trace.monotone()
    if not meta["monotone"]:
        log.warning("objective increased during descent; the step size is too large")
    return SpectralField(F.full(x).reshape(V0.coeffs.shape)), trace, meta


def reconstruct(data: CauchyData, cfg, c_true: Optional[np.ndarray] = None) -> ReconstructionResult:
    """Boundary/B assembly -> quasi-reversibility start -> descent -> recovery of c."""
    t0 = time.perf_counter()
    problem = assemble_problem(data, cfg)
    V0 = initialize(problem, cfg.effective_qr_eps)
    V, trace, meta = minimize(problem, V0, cfg)
    c = _stage("recover", recover_c, V, problem.basis, cfg.spatial_grid(), cfg.x0, cfg.c_policy)
    metrics = {}
    if c_true is not None:
        metrics = error_metrics(c, c_true, cfg.spatial_grid())
    metrics.update({k: v for k, v in meta.items()})
    metrics["n_iter"] = trace.n_iter
    metrics["seconds"] = time.perf_counter() - t0
    return ReconstructionResult(V=V, c=c, trace=trace, metrics=metrics,
                                params_echo=cfg.to_dict(), V0=V0)
