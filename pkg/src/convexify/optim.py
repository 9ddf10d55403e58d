"""Gradient descent for functionals strictly convex on a ball.

Vectors may be real or complex numpy arrays; complex arrays are treated as
their real/imaginary split, so the inner product is ``Re <x, y>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


def inner(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.real(np.vdot(x, y)))


def euclidean_norm(x: np.ndarray) -> float:
    return float(np.sqrt(inner(x, x)))


@dataclass(frozen=True)
class BallConstraint:
    M: float
    norm_kind: str = "weighted-H2"

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("ball radius must be positive")


@dataclass(frozen=True)
class ConvexityConstants:
    L: float
    Lam: float


@dataclass(frozen=True)
class DescentConfig:
    eta: float
    max_iter: int = 1000
    tol: float = 1e-8
    ball: BallConstraint = BallConstraint(np.inf)
    constants: Optional[ConvexityConstants] = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("step size must be positive")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.constants is not None:
            c = self.constants
            eta0 = min(2 * c.Lam / c.L**2, 1.0)
            if not self.eta < eta0:
                raise ValueError(f"step {self.eta} outside (0, {eta0}) for L={c.L}, Lambda={c.Lam}")


@dataclass
class DescentTrace:
    iterates_norms: list = field(default_factory=list)
    objective_values: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    exited_ball: bool = False
    n_iter: int = 0
    converged: bool = False

    def monotone(self) -> bool:
        J = self.objective_values
        return all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(J, J[1:]))


def theoretical_rate(L: float, Lam: float, eta: float) -> float:
    """Squared-norm contraction factor q = 1 + eta^2 L^2 - 2 eta Lambda."""
    if not (Lam > 0 and L >= Lam):
        raise ValueError(f"need L >= Lambda > 0, got L={L}, Lambda={Lam}")
    eta0 = min(2 * Lam / L**2, 1.0)
    if not (0 < eta < eta0):
        raise ValueError(f"eta={eta} outside (0, {eta0})")
    return 1.0 + eta**2 * L**2 - 2.0 * eta * Lam


def descend(
    J: Callable[[np.ndarray], float],
    gradJ: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    cfg: DescentConfig,
    norm: Callable[[np.ndarray], float] = euclidean_norm,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
    riesz: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> tuple[np.ndarray, DescentTrace]:
    """Iterate v <- v - eta J'(v) until the step norm drops below ``cfg.tol``.

    ``gradJ`` returns the Euclidean gradient; ``riesz`` maps it to the
    gradient in another inner product (the inverse of its Gram operator).
    Leaving the ball is recorded in the trace but does not stop iteration.
    """
    v = np.array(v0, copy=True)
    trace = DescentTrace()
    if not norm(v) < cfg.ball.M:
        trace.exited_ball = True
    for m in range(cfg.max_iter):
        val = J(v)
        g = gradJ(v)
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite objective at iteration {m}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at iteration {m}")
        step = cfg.eta * (g if riesz is None else riesz(g))
        v_new = v - step
        nv = norm(v_new)
        trace.objective_values.append(float(val))
        trace.iterates_norms.append(nv)
        trace.step_norms.append(norm(step))
        trace.n_iter = m + 1
        if nv >= cfg.ball.M:
            trace.exited_ball = True
        v = v_new
        if callback is not None:
            callback(m, v)
        if trace.step_norms[-1] < cfg.tol:
            trace.converged = True
            break
    return v, trace


def estimate_constants(
    gradJ: Callable[[np.ndarray], np.ndarray], samples
) -> ConvexityConstants:
    """Empirical Lipschitz and monotonicity constants over sample pairs."""
    L_hat, Lam_hat, used = 0.0, math.inf, 0
    for v1, v2 in samples:
        dv = np.asarray(v2) - np.asarray(v1)
        nrm2 = inner(dv, dv)
        if nrm2 == 0:
            continue
        dg = gradJ(v2) - gradJ(v1)
        L_hat = max(L_hat, math.sqrt(inner(dg, dg) / nrm2))
        Lam_hat = min(Lam_hat, inner(dg, dv) / nrm2)
        used += 1
    if used == 0:
        raise ValueError("all sample pairs coincide")
    return ConvexityConstants(L=L_hat, Lam=Lam_hat)


def backtracked_step(
    J: Callable[[np.ndarray], float],
    gradJ: Callable[[np.ndarray], np.ndarray],
    v: np.ndarray,
    eta: float = 1.0,
    shrink: float = 0.5,
    max_halvings: int = 200,
    riesz: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> float:
    """Largest eta = eta0 * shrink^j passing the Armijo test J(v - eta p) <= J(v) - eta/2 <g, p>.

    ``p`` is the gradient mapped by ``riesz`` (the Euclidean gradient when None).
    """
    J0 = J(v)
    g = gradJ(v)
    p = g if riesz is None else riesz(g)
    g2 = inner(g, p)
    if g2 == 0:
        return eta
    for _ in range(max_halvings):
        if J(v - eta * p) <= J0 - 0.5 * eta * g2:
            return eta
        eta *= shrink
    raise FloatingPointError("backtracking failed to find a descent step")
