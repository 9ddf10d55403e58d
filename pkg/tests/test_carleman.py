"""Carleman weight, difference operators and the quasi-reversibility start."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convexify.carleman import (CarlemanWeight, DiscreteOperators, carleman_terms, check_sample,
                                layered_metric, qr_initialize, qr_system, solve_normal,
                                verify_carleman, weight_field)
from convexify.forward import SpatialGrid
from convexify.transform import BoundaryVectors
from convexify.verification import bump_samples


def test_weight_forms():
    grid = SpatialGrid(1.0, 11)
    mu = weight_field(CarlemanWeight(1.1, 1.5), grid)
    z = grid.coords
    np.testing.assert_allclose(mu[3, 4], np.exp(1.1 * ((z - 1.5) ** 2 - 2.5**2)), rtol=1e-14)
    assert mu[0, 0, 0] == pytest.approx(1.0)
    assert np.all(np.diff(mu[0, 0]) < 0)
    plus = weight_field(CarlemanWeight(1.1, 1.5, "plus"), grid)
    np.testing.assert_allclose(plus[0, 0], np.exp(1.1 * (z + 1.5) ** 2))
    flat = weight_field(CarlemanWeight(0.0, 1.5), grid)
    assert np.all(flat == 1.0)


def test_weight_validation_and_overflow_guard():
    with pytest.raises(ValueError):
        CarlemanWeight(-1.0, 1.5)
    with pytest.raises(ValueError):
        CarlemanWeight(1.0, 0.5, "plus")
    with pytest.raises(OverflowError):
        weight_field(CarlemanWeight(200.0, 1.5), SpatialGrid(1.0, 5))


def quadratic(grid, a):
    X, Y, Z = grid.mesh()
    return a[0] * X**2 + a[1] * Y**2 + a[2] * Z**2 + a[3] * X * Y + a[4] * Y * Z + a[5] * X * Z + a[6] * Z


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=7, max_size=7))
def test_operators_exact_on_quadratics(a):
    grid = SpatialGrid(1.0, 7)
    ops = DiscreteOperators(grid)
    X, Y, Z = grid.mesh()
    v = quadratic(grid, a).ravel()
    inner = lambda f: ops.interior_values(f)
    np.testing.assert_allclose(ops.laplacian @ v, 2 * (a[0] + a[1] + a[2]), atol=1e-9)
    np.testing.assert_allclose(ops.grad[0] @ v, inner(2 * a[0] * X + a[3] * Y + a[5] * Z), atol=1e-9)
    np.testing.assert_allclose(ops.grad[2] @ v, inner(2 * a[2] * Z + a[4] * Y + a[5] * X + a[6]), atol=1e-9)
    np.testing.assert_allclose(ops.mixed(0, 1) @ v, a[3], atol=1e-9)
    np.testing.assert_allclose(ops.mixed(2, 1) @ v, a[4], atol=1e-9)
    # outward normal on z = -R is -z
    dz = 2 * a[2] * Z + a[4] * Y + a[5] * X + a[6]
    np.testing.assert_allclose(ops.neumann @ v, -dz[1:-1, 1:-1, 0].ravel(), atol=1e-9)


def test_index_sets_partition_lattice():
    ops = DiscreteOperators(SpatialGrid(1.0, 6))
    assert ops.interior.size == 4**3
    assert np.intersect1d(ops.interior, ops.boundary).size == 0
    assert ops.interior.size + ops.boundary.size == 6**3
    assert np.all(np.isin(ops.face, ops.boundary))


def test_carleman_constants_stable_on_bumps():
    grid = SpatialGrid(1.0, 21)
    rep = verify_carleman(CarlemanWeight(1.1, 1.5), [1.1, 2.0, 4.0], bump_samples(grid), grid)
    assert rep.stable
    assert min(rep.constants) > rep.floor


def test_carleman_rejects_sample_violating_boundary_conditions():
    grid = SpatialGrid(1.0, 9)
    ops = DiscreteOperators(grid)
    bad = np.ones(grid.shape)
    assert not check_sample(bad, ops)
    with pytest.raises(ValueError):
        verify_carleman(CarlemanWeight(1.1, 1.5), [1.1], [bad], grid)


def test_carleman_terms_scale():
    grid = SpatialGrid(1.0, 11)
    ops = DiscreteOperators(grid)
    phi = bump_samples(grid, 1)[0]
    mu = weight_field(CarlemanWeight(1.1, 1.5), grid)
    l1, r1 = carleman_terms(phi, mu, 1.1, ops)
    l2, r2 = carleman_terms(2 * phi, mu, 1.1, ops)
    assert l2 == pytest.approx(4 * l1) and r2 == pytest.approx(4 * r1)


def harmonic_case(n=9):
    """One equation, s = 1, B = 0, exact solution x^2 - z^2 + 0.5 y."""
    grid = SpatialGrid(1.0, n)
    X, Y, Z = grid.mesh()
    V = (X**2 - Z**2 + 0.5 * Y)[None]
    ops = DiscreteOperators(grid)
    g1 = np.zeros_like(V)
    bmask = grid.boundary_mask()
    g1[0][bmask] = V[0][bmask]
    g0 = np.zeros((1, n, n))
    g0[0, 1:-1, 1:-1] = (ops.neumann @ V[0].ravel()).reshape(n - 2, n - 2)
    return grid, V, BoundaryVectors(g1=g1.astype(complex), g0=g0.astype(complex))


@pytest.mark.parametrize("eps, tol", [(1e-6, 5e-3), (1e-9, 1e-5)])
def test_quasi_reversibility_recovers_manufactured_solution(eps, tol):
    grid, V, bnd = harmonic_case()
    B = np.zeros((1, 1) + grid.shape + (3,))
    out, info = qr_initialize(np.eye(1), B, bnd, CarlemanWeight(1.1, 1.5), eps, grid, return_info=True)
    assert np.abs(out.coeffs - V).max() / np.abs(V).max() < tol
    assert info.residual < 1e-8
    np.testing.assert_array_equal(out.coeffs[0][grid.boundary_mask()], bnd.g1[0][grid.boundary_mask()])


def test_qr_rejects_nonpositive_eps():
    grid, _, bnd = harmonic_case(5)
    with pytest.raises(ValueError):
        qr_system(np.eye(1), np.zeros((1, 1) + grid.shape + (3,)), bnd, CarlemanWeight(1.1, 1.5), 0.0, grid)


def test_layered_preconditioner_is_hermitian_positive():
    grid = SpatialGrid(1.0, 7)
    rng = np.random.default_rng(0)
    s = np.triu(rng.standard_normal((2, 2))) + 2 * np.eye(2)
    B = (rng.standard_normal((2, 2) + grid.shape + (3,)) * (1 + 1j))
    P = layered_metric(s, B, CarlemanWeight(1.1, 1.5), 1e-3, grid)
    size = 2 * 5**3
    x = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    y = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    assert abs(np.vdot(y, P.apply(x)) - np.conj(np.vdot(x, P.apply(y)))) < 1e-9 * abs(np.vdot(y, P.apply(x)))
    assert np.real(np.vdot(x, P.apply(x))) > 0


def test_preconditioned_cg_converges_fast_on_layered_problem():
    """With B depending on z only, the preconditioner is close to the exact inverse."""
    grid = SpatialGrid(1.0, 9)
    N = 2
    s = np.array([[1.0, 0.3], [0.0, 0.8]])
    e = np.zeros(grid.shape + (3,))
    e[..., 2] = 1.0
    B = np.einsum("li,xyzd->lixyzd", np.array([[1j, 0.2], [0.0, 2j]]), e)
    rng = np.random.default_rng(1)
    g0 = rng.standard_normal((N, 9, 9)) + 0j
    bnd = BoundaryVectors(g1=np.zeros((N,) + grid.shape, complex), g0=g0)
    sysm = qr_system(s, B, bnd, CarlemanWeight(1.1, 1.5), 1e-4, grid)
    x, info = solve_normal(sysm)
    assert info.iterations < 60
    assert np.linalg.norm(sysm.M @ x - sysm.b) / np.linalg.norm(sysm.b) < 1e-8
