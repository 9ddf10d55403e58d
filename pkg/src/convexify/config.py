"""Run configuration: a flat JSON object.

Units: lengths (R, x0) in the same unit as the domain half-width; wavenumbers
in rad per length unit; noise level delta as a fraction (0.1 = 10%).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional


@dataclass
class RunConfig:
    # spatial lattice on (-R, R)^3
    R: float = 1.0
    n_x: int = 21
    # wavenumber interval and nodes
    k_min: float = math.pi
    k_max: float = 2 * math.pi
    n_k: int = 61
    N: int = 5
    x0: tuple = (0.0, 0.0, -4.0)
    # Carleman weight
    weight_form: str = "scaled_minus"
    lam: float = 1.1
    r: float = 1.5
    # functional and descent
    eps: float = 1e-3  # desk-scale calibrated; see README
    qr_eps: Optional[float] = None  # regularisation of the starting-point solve; None: same as eps
    neumann_weight: float = 1.0
    eta: Optional[float] = 2e-3  # None: eta_fraction * backtracked step at the start point
    eta_fraction: float = 0.1
    descent_metric: str = "linearized"  # inner product of the gradient: "euclidean" | "h2" | "linearized"
    max_iter: int = 2000  # early stopping: the iteration count regularises at desk scale
    tol: float = 1e-8
    ball_radius: Optional[float] = None
    c_policy: str = "mean"  # k-policy for recovering c: "mean" | "kmax"
    # data
    delta: float = 0.1
    seed: int = 42
    phantom: str = "ellipsoid5"
    phantom_file: Optional[str] = None
    forward_rtol: float = 1e-10
    output_dir: str = "out"
    inverse_crime_guard: bool = True
    ablation_lambda_zero: bool = False

    def __post_init__(self):
        self.x0 = tuple(float(v) for v in self.x0)
        self.validate()

    def validate(self) -> None:
        errs = []
        if self.R <= 0:
            errs.append("R must be positive")
        if self.n_x < 5:
            errs.append("n_x must be >= 5")
        if not (self.k_max > self.k_min > 0):
            errs.append("need k_max > k_min > 0")
        if self.n_k < 2:
            errs.append("n_k must be >= 2")
        if not (1 <= self.N <= self.n_k):
            errs.append("N must be in [1, n_k]")
        if len(self.x0) != 3 or all(abs(v) <= self.R for v in self.x0):
            errs.append("x0 must be a 3-vector outside the closed domain")
        if self.weight_form not in ("plus", "scaled_minus"):
            errs.append(f"unknown weight_form {self.weight_form!r}")
        if self.lam < 0:
            errs.append("lam must be nonnegative")
        if self.eps <= 0:
            errs.append("eps must be positive")
        if self.qr_eps is not None and self.qr_eps <= 0:
            errs.append("qr_eps must be positive")
        if self.eta is not None and self.eta <= 0:
            errs.append("eta must be positive")
        if not (0 < self.eta_fraction <= 1):
            errs.append("eta_fraction must be in (0, 1]")
        if self.max_iter < 0:
            errs.append("max_iter must be nonnegative")
        if self.tol <= 0:
            errs.append("tol must be positive")
        if self.delta < 0:
            errs.append("delta must be nonnegative")
        if self.descent_metric not in ("euclidean", "h2", "linearized"):
            errs.append(f"unknown descent_metric {self.descent_metric!r}")
        if self.c_policy not in ("mean", "kmax"):
            errs.append(f"unknown c_policy {self.c_policy!r}")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def effective_qr_eps(self) -> float:
        return self.eps if self.qr_eps is None else self.qr_eps

    @property
    def effective_lam(self) -> float:
        return 0.0 if self.ablation_lambda_zero else self.lam

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x0"] = list(self.x0)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.loads(Path(path).read_text())

    def replace(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update(kw)
        return RunConfig.from_dict(d)

    # derived objects
    def spatial_grid(self):
        from .forward import SpatialGrid
        return SpatialGrid(self.R, self.n_x)

    def wavenumber_grid(self):
        from .basis import WavenumberGrid
        return WavenumberGrid(self.k_min, self.k_max, self.n_k)

    def weight(self):
        from .carleman import CarlemanWeight
        return CarlemanWeight(self.effective_lam, self.r, self.weight_form)


# Full-resolution values used for the published experiments.
FINE_SCALE = dict(n_x=41, n_k=121, N=7)
