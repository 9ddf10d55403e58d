"""Lippmann-Schwinger forward solver and synthetic back-scattering data.

The volume integral is discretised by the midpoint rule on the lattice; the
self cell uses the exact integral of the Green kernel over the ball of equal
volume.  Only lattice points with nonzero contrast are unknowns, and the
convolution with the kernel is applied through zero-padded FFTs over the
bounding box of the contrast support.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from .basis import WavenumberGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform lattice on the cube (-R, R)^3; axis order (x, y, z)."""

    R: float
    n_x: int

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("R must be positive")
        if self.n_x < 3:
            raise ValueError("n_x must be at least 3")

    @property
    def h(self) -> float:
        return 2.0 * self.R / (self.n_x - 1)

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(-self.R, self.R, self.n_x)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_x,) * 3

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = self.coords
        return np.meshgrid(c, c, c, indexing="ij")

    def refined(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(self.R, factor * (self.n_x - 1) + 1)

    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0, :, :] = m[-1, :, :] = True
        m[:, 0, :] = m[:, -1, :] = True
        m[:, :, 0] = m[:, :, -1] = True
        return m


@dataclass
class Phantom:
    c: np.ndarray
    description: str = ""

    def validate(self) -> None:
        if np.any(self.c < 1.0):
            raise ValueError(f"phantom {self.description!r} has c < 1")
        layer = np.concatenate([
            self.c[[0, -1], :, :].ravel(), self.c[:, [0, -1], :].ravel(),
            self.c[:, :, [0, -1]].ravel(),
        ])
        if np.any(layer != 1.0):
            raise ValueError(f"phantom {self.description!r} has contrast on the boundary")


@dataclass
class ComplexField:
    """Samples on grid x k nodes, array shape (n_x, n_x, n_x, n_k)."""

    values: np.ndarray
    kind: str  # "incident" | "total" | "scattered"


@dataclass
class CauchyData:
    """Dirichlet trace f and g = -du/dz on the face z = -R, shape (n_x, n_x, n_k)."""

    f: np.ndarray
    g: np.ndarray
    noise_level: float = 0.0
    seed: int | None = None
    meta: dict = field(default_factory=dict)


def _distance(x0, grid: SpatialGrid) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    X, Y, Z = grid.mesh()
    d = (X - x0[0], Y - x0[1], Z - x0[2])
    return np.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2), d


def _check_source(x0, R: float) -> None:
    if np.all(np.abs(np.asarray(x0, dtype=float)) <= R):
        raise ValueError(f"source {tuple(x0)} lies in the closed domain [-{R}, {R}]^3")


def incident_field(x0, grid: SpatialGrid, kgrid: WavenumberGrid) -> ComplexField:
    """Point source exp(ik|x-x0|) / (4 pi |x-x0|) on the lattice."""
    _check_source(x0, grid.R)
    rho, _ = _distance(x0, grid)
    k = kgrid.nodes
    vals = np.exp(1j * rho[..., None] * k) / (4 * np.pi * rho[..., None])
    return ComplexField(vals, "incident")


def self_cell_weight(k: float, h: float) -> complex:
    """Integral of the Green kernel over a ball of volume h^3 centred at its pole."""
    a = (3.0 / (4.0 * np.pi)) ** (1.0 / 3.0) * h
    if k * a < 1e-6:
        return a * a / 2.0
    return (np.exp(1j * k * a) * (1.0 - 1j * k * a) - 1.0) / (k * k)


def kernel_weights(k: float, h: float, offsets: tuple[np.ndarray, ...]) -> np.ndarray:
    """Quadrature weights of G_k at lattice offsets (in units of h)."""
    r = h * np.sqrt(offsets[0] ** 2 + offsets[1] ** 2 + offsets[2] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.exp(1j * k * r) / (4 * np.pi * r) * h**3
    w[r == 0] = self_cell_weight(k, h)
    return w


class BoxConvolver:
    """Discrete convolution with the Green kernel from a source box to a target box.

    Boxes are given as lower index corners and shapes on a common lattice.
    """

    def __init__(self, k: float, h: float, src_lo, src_shape, dst_lo, dst_shape):
        self.src_shape = tuple(src_shape)
        self.dst_shape = tuple(dst_shape)
        # offsets dst - src range over [dst_lo - src_hi, dst_hi - src_lo]
        lo = [dl - (sl + ss - 1) for dl, sl, ss in zip(dst_lo, src_lo, src_shape)]
        ext = [ds + ss - 1 for ds, ss in zip(dst_shape, src_shape)]
        self.fft_shape = tuple(sfft.next_fast_len(e) for e in ext)
        grids = np.meshgrid(*[np.arange(e) + o for e, o in zip(ext, lo)], indexing="ij")
        K = np.zeros(self.fft_shape, dtype=complex)
        K[tuple(slice(0, e) for e in ext)] = kernel_weights(k, h, tuple(grids))
        self.K_hat = sfft.fftn(K)
        self.start = tuple(ss - 1 for ss in src_shape)

    def __call__(self, q: np.ndarray) -> np.ndarray:
        out = sfft.ifftn(self.K_hat * sfft.fftn(q, s=self.fft_shape))
        sl = tuple(slice(s0, s0 + d) for s0, d in zip(self.start, self.dst_shape))
        return out[sl]


def _support_box(contrast: np.ndarray):
    idx = np.argwhere(contrast != 0)
    if idx.size == 0:
        return None
    lo = idx.min(axis=0)
    hi = idx.max(axis=0) + 1
    return tuple(lo), tuple(hi - lo)


class LippmannSchwinger:
    """Discrete second-kind operator (I - k^2 G m) restricted to the contrast support."""

    def __init__(self, contrast: np.ndarray, h: float, k: float):
        box = _support_box(contrast)
        if box is None:
            raise ValueError("zero contrast: nothing to solve")
        self.lo, self.shape = box
        self.sl = tuple(slice(l, l + s) for l, s in zip(self.lo, self.shape))
        self.m = contrast[self.sl]
        self.mask = self.m != 0
        self.k, self.h = k, h
        self.conv = BoxConvolver(k, h, self.lo, self.shape, self.lo, self.shape)

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    def matvec(self, x: np.ndarray) -> np.ndarray:
        q = np.zeros(self.shape, dtype=complex)
        q[self.mask] = self.m[self.mask] * x
        return x - self.k**2 * self.conv(q)[self.mask]

    def dense(self) -> np.ndarray:
        """Explicit matrix of the same discrete operator (oracle for small supports)."""
        pts = np.argwhere(self.mask)
        off = tuple(pts[:, d][:, None] - pts[:, d][None, :] for d in range(3))
        G = kernel_weights(self.k, self.h, off)
        return np.eye(len(pts)) - self.k**2 * G * self.m[self.mask][None, :]

    def as_operator(self) -> LinearOperator:
        n = self.size
        return LinearOperator((n, n), matvec=self.matvec, dtype=complex)


def _active(u0: ComplexField | np.ndarray):
    return u0.values if isinstance(u0, ComplexField) else u0


def evaluate_total(contrast, h, k, w_support, op: LippmannSchwinger, u0_k, grid_shape):
    """Total field on the full lattice from the support solution."""
    conv = BoxConvolver(k, h, op.lo, op.shape, (0, 0, 0), grid_shape)
    q = np.zeros(op.shape, dtype=complex)
    q[op.mask] = op.m[op.mask] * w_support
    return u0_k + k**2 * conv(q)


def solve_scattering(
    phantom: Phantom,
    kgrid: WavenumberGrid,
    x0,
    grid: SpatialGrid,
    rtol: float = 1e-10,
    maxiter: int = 500,
    dense: bool = False,
) -> ComplexField:
    """Total field u = u0 + k^2 G[(c-1) u] on the whole lattice for every k node.

    ``dense=True`` solves the same discrete system by LU (small supports only).
    """
    u0 = incident_field(x0, grid, kgrid).values
    contrast = phantom.c - 1.0
    if not np.any(contrast):
        return ComplexField(u0.copy(), "total")
    out = np.empty_like(u0)
    for ik, k in enumerate(kgrid.nodes):
        op = LippmannSchwinger(contrast, grid.h, k)
        b = u0[..., ik][op.sl][op.mask]
        if dense:
            w = np.linalg.solve(op.dense(), b)
        else:
            w = _krylov(op, b, rtol, maxiter)
        out[..., ik] = evaluate_total(contrast, grid.h, k, w, op, u0[..., ik], grid.shape)
    return ComplexField(out, "total")


def _krylov(op: LippmannSchwinger, b: np.ndarray, rtol: float, maxiter: int) -> np.ndarray:
    A = op.as_operator()
    hist = []
    w, info = gmres(A, b, x0=b.copy(), rtol=rtol, atol=0.0, restart=min(100, op.size),
                    maxiter=maxiter, callback=hist.append, callback_type="pr_norm")
    res = np.linalg.norm(op.matvec(w) - b) / np.linalg.norm(b)
    if info != 0 or res > 10 * rtol:
        raise RuntimeError(
            f"Lippmann-Schwinger GMRES did not converge at k={op.k:.4f}: "
            f"relative residual {res:.3e} after {len(hist)} iterations"
        )
    return w


def born_term(phantom: Phantom, kgrid: WavenumberGrid, x0, grid: SpatialGrid) -> ComplexField:
    """First Born approximation k^2 G[(c-1) u0], by direct summation over the support."""
    u0 = incident_field(x0, grid, kgrid).values
    contrast = phantom.c - 1.0
    pts = np.argwhere(contrast != 0)
    X = np.stack(np.meshgrid(*[np.arange(grid.n_x)] * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    out = np.zeros_like(u0)
    for ik, k in enumerate(kgrid.nodes):
        acc = np.zeros(X.shape[0], dtype=complex)
        for p in pts:
            off = tuple(X[:, d] - p[d] for d in range(3))
            acc += kernel_weights(k, grid.h, off) * contrast[tuple(p)] * u0[tuple(p) + (ik,)]
        out[..., ik] = k**2 * acc.reshape(grid.shape)
    return ComplexField(out, "scattered")


def incident_dz_face(x0, grid: SpatialGrid, kgrid: WavenumberGrid) -> np.ndarray:
    """Closed-form du0/dz on the face z = -R, shape (n, n, n_k)."""
    c = grid.coords
    X, Y = np.meshgrid(c, c, indexing="ij")
    dzr = -grid.R - x0[2]
    rho = np.sqrt((X - x0[0]) ** 2 + (Y - x0[1]) ** 2 + dzr**2)[..., None]
    k = kgrid.nodes
    u0 = np.exp(1j * k * rho) / (4 * np.pi * rho)
    return u0 * (1j * k - 1.0 / rho) * (dzr / rho)


def extract_cauchy(u: ComplexField, grid: SpatialGrid, incident: tuple | None = None) -> CauchyData:
    """Trace and -du/dz on z = -R with the one-sided second-order stencil.

    With ``incident = (x0, kgrid)`` only the scattered part u - u0 is
    differentiated numerically; du0/dz is taken in closed form.
    """
    v = u.values
    f = v[:, :, 0, :].copy()
    if incident is not None:
        x0, kgrid = incident
        v = v[:, :, :3, :] - incident_field(x0, grid, kgrid).values[:, :, :3, :]
    dz = (-3.0 * v[:, :, 0, :] + 4.0 * v[:, :, 1, :] - v[:, :, 2, :]) / (2.0 * grid.h)
    if incident is not None:
        dz = dz + incident_dz_face(x0, grid, kgrid)
    return CauchyData(f=f, g=-dz, noise_level=0.0)


def add_noise(data: CauchyData, delta: float, seed: int) -> CauchyData:
    """Multiplicative noise f (1 + delta r), g (1 + delta r'), r, r' ~ U[-1, 1]."""
    if delta < 0:
        raise ValueError("noise level must be nonnegative")
    rng = np.random.default_rng(seed)
    rf = rng.uniform(-1.0, 1.0, size=data.f.shape)
    rg = rng.uniform(-1.0, 1.0, size=data.g.shape)
    meta = dict(data.meta, noise_level=delta, seed=seed)
    return replace(data, f=data.f * (1.0 + delta * rf), g=data.g * (1.0 + delta * rg),
                   noise_level=delta, seed=seed, meta=meta)


@dataclass(frozen=True)
class NonvanishingReport:
    min_abs: float
    index: tuple[int, int, int]
    k_index: int

    def ok(self, threshold: float = 1e-6) -> bool:
        return self.min_abs > threshold


def check_nonvanishing(u: ComplexField) -> NonvanishingReport:
    a = np.abs(u.values)
    flat = int(np.argmin(a))
    i, j, l, ik = np.unravel_index(flat, a.shape)
    return NonvanishingReport(float(a.flat[flat]), (int(i), int(j), int(l)), int(ik))


def restrict(u: ComplexField, fine: SpatialGrid, coarse: SpatialGrid) -> ComplexField:
    """Sample a field from a refined lattice at the coarse lattice points."""
    factor, rem = divmod(fine.n_x - 1, coarse.n_x - 1)
    if rem or fine.R != coarse.R:
        raise ValueError("fine grid does not nest the coarse grid")
    s = slice(None, None, factor)
    return ComplexField(u.values[s, s, s].copy(), u.kind)


def simulate_total(phantom_fn, kgrid, x0, grid: SpatialGrid, refine: int = 2, **kw) -> ComplexField:
    """Total field at the lattice of ``grid``, computed on a ``refine``-times finer lattice.

    ``phantom_fn(X, Y, Z)`` returns c at coordinates; ``refine=1`` solves on
    ``grid`` itself.
    """
    fine = grid.refined(refine) if refine > 1 else grid
    ph = Phantom(phantom_fn(*fine.mesh()))
    ph.validate()
    u = solve_scattering(ph, kgrid, x0, fine, **kw)
    return restrict(u, fine, grid) if refine > 1 else u


def generate_data(phantom_fn, kgrid, x0, grid: SpatialGrid, refine: int = 2, **kw):
    """Noise-free Cauchy data on the face z = -R of ``grid``.

    With ``refine > 1`` the normal derivative is formed on the fine lattice
    before restriction; the incident part of it is exact.  Returns ``(data, u_total_on_grid)``.
    """
    fine = grid.refined(refine) if refine > 1 else grid
    ph = Phantom(phantom_fn(*fine.mesh()))
    ph.validate()
    u_fine = solve_scattering(ph, kgrid, x0, fine, **kw)
    data = extract_cauchy(u_fine, fine, incident=(x0, kgrid))
    if refine > 1:
        s = slice(None, None, refine)
        data = CauchyData(f=data.f[s, s].copy(), g=data.g[s, s].copy())
        u = restrict(u_fine, fine, grid)
    else:
        u = u_fine
    return data, u
