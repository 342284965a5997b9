import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smse import geometry as G
from smse.discretization import (
    ScalarField, assemble_jacobian, assemble_residual, coefficients, discrete_gradient, laplacian,
    min_ellipticity,
)
from smse.errors import DomainError
from smse.radial import PhysicsParams

SQRT3_2 = math.sqrt(3) / 2
QUAD = "2 + 0.3*x^2 - 0.2*x*y + 0.1*y^2 + 0.05*x"


def quad_derivatives(x, y):
    u = 2 + 0.3 * x**2 - 0.2 * x * y + 0.1 * y**2 + 0.05 * x
    ux = 0.6 * x - 0.2 * y + 0.05
    uy = -0.2 * x + 0.2 * y
    return u, ux, uy, 0.6 * np.ones_like(x), -0.2 * np.ones_like(x), 0.2 * np.ones_like(x)


def q_exact(x, y, at):
    u, ux, uy, uxx, uxy, uyy = quad_derivatives(x, y)
    return ((1 + uy**2) * uxx + (1 + ux**2) * uyy - 2 * ux * uy * uxy
            - at * (1 + ux**2 + uy**2) / u)


@pytest.fixture(scope="module")
def quad_grid():
    return G.build_grid(G.ellipse(0.6, 0.4, phi=QUAD), 1 / 32)


@pytest.fixture(scope="module")
def disk_grid():
    return G.build_grid(G.disk(0.5, phi=SQRT3_2), 1 / 32)


def test_residual_exact_for_quadratics(quad_grid):
    # three-point stencils with unequal arms reproduce quadratics exactly
    x, y = quad_grid.xy.T
    u = ScalarField(quad_grid, quad_derivatives(x, y)[0])
    for at in (0.0, -0.7):
        r = assemble_residual(u, PhysicsParams(at, allow_nonnegative=True))
        np.testing.assert_allclose(r, q_exact(x, y, at), atol=1e-8)


def test_gradient_exact_for_quadratics(quad_grid):
    x, y = quad_grid.xy.T
    _, ux, uy, *_ = quad_derivatives(x, y)
    g = discrete_gradient(ScalarField(quad_grid, quad_derivatives(x, y)[0]))
    np.testing.assert_allclose(g, np.column_stack([ux, uy]), atol=1e-10)


def test_constant_field_residual(disk_grid):
    D = G.disk(0.5, phi=1.7)
    grid = G.build_grid(D, 1 / 32)
    u = ScalarField(grid, np.full(grid.n_active, 1.7))
    assert np.max(np.abs(assemble_residual(u, PhysicsParams(-2.0, t=0.0)))) <= 1e-9
    np.testing.assert_allclose(assemble_residual(u, PhysicsParams(-2.0)), 2 / 1.7, atol=1e-10)


def test_constant_field_jacobian():
    D = G.disk(0.5, phi=1.7)
    grid = G.build_grid(D, 1 / 32)
    u = ScalarField(grid, np.full(grid.n_active, 1.7))
    J = assemble_jacobian(u, PhysicsParams(-2.0))
    L, _ = laplacian(grid)
    diff = J.matrix - L - (-2.0 / 1.7**2) * np.eye(grid.n_active)
    assert np.max(np.abs(diff)) <= 1e-9 * np.max(np.abs(L))
    np.testing.assert_allclose(J.a11, 1.0)
    np.testing.assert_allclose(J.a12, 0.0, atol=1e-20)
    np.testing.assert_allclose(J.b1, 0.0, atol=1e-9)


def random_positive_field(grid, rng):
    x, y = grid.xy.T
    smooth = 1.5 + 0.2 * np.sin(3 * x) * np.cos(2 * y) + 0.1 * x
    return ScalarField(grid, smooth + 0.05 * rng.uniform(-1, 1, grid.n_active))


def test_jacobian_matches_directional_differences(disk_grid, rng):
    u = random_positive_field(disk_grid, rng)
    params = PhysicsParams(-1.3, t=0.8)
    J = assemble_jacobian(u, params)
    r0 = assemble_residual(u, params)
    eps = 1e-7
    for _ in range(3):
        v = rng.normal(size=disk_grid.n_active)
        fd = (assemble_residual(ScalarField(disk_grid, u.values + eps * v), params) - r0) / eps
        Lv = J @ v
        assert np.linalg.norm(fd - Lv) / np.linalg.norm(Lv) <= 1e-5


def test_hemisphere_truncation(disk_grid):
    D = G.disk(0.5, phi=SQRT3_2)
    rms, sup = [], []
    hs = (1 / 16, 1 / 32, 1 / 64)
    for h in hs:
        grid = G.build_grid(D, h)
        u = ScalarField(grid, np.sqrt(1 - np.sum(grid.xy**2, axis=1)))
        r = assemble_residual(u, PhysicsParams(-2.0))
        rms.append(np.sqrt(np.mean(r**2)))
        sup.append(np.max(np.abs(r)))
    orders = np.log2(np.array(rms[:-1]) / np.array(rms[1:]))
    assert np.all(orders >= 1.0)
    assert sup[0] > sup[1] > sup[2]
    assert all(s <= 2 * h for s, h in zip(sup, hs))


def test_hemisphere_gradient(disk_grid):
    x = disk_grid.xy
    u = np.sqrt(1 - np.sum(x**2, axis=1))
    g = np.linalg.norm(discrete_gradient(ScalarField(disk_grid, u)), axis=1)
    exact = np.linalg.norm(x, axis=1) / u
    assert np.max(np.abs(g - exact)) <= 2 * disk_grid.h


def test_linear_field_gradient():
    grid = G.build_grid(G.disk(1.0, phi="2+x"), 1 / 8)
    g = discrete_gradient(ScalarField(grid, 2 + grid.xy[:, 0]))
    np.testing.assert_allclose(g, np.tile([1.0, 0.0], (grid.n_active, 1)), atol=1e-12)
    grid = G.build_grid(G.disk(1.0, phi=3.0), 1 / 8)
    assert np.max(np.abs(discrete_gradient(ScalarField(grid, np.full(grid.n_active, 3.0))))) <= 1e-12


def test_nonpositive_field_rejected(disk_grid):
    u = np.full(disk_grid.n_active, 1.0)
    u[7] = 0.0
    with pytest.raises(DomainError):
        assemble_residual(ScalarField(disk_grid, u), PhysicsParams(-1.0))
    with pytest.raises(DomainError):
        assemble_jacobian(ScalarField(disk_grid, u), PhysicsParams(-1.0))


def test_field_shape_checked(disk_grid):
    with pytest.raises(ValueError):
        ScalarField(disk_grid, np.ones(3))


GRID = G.build_grid(G.ellipse(0.6, 0.4, phi=1.2), 1 / 16)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3.0, 0.0), st.floats(0.0, 1.0), st.integers(0, 2**31 - 1),
       st.floats(0.0, 2 * np.pi))
def test_c_nonpositive_and_elliptic(alpha, t, seed, angle):
    rng = np.random.default_rng(seed)
    u = random_positive_field(GRID, rng)
    op = assemble_jacobian(u, PhysicsParams(alpha, t=t, allow_nonnegative=True))
    assert np.max(op.c) <= 0.0
    xi = (math.cos(angle), math.sin(angle))
    assert min_ellipticity(op, xi) >= -1e-12


def test_coefficients_formula(quad_grid):
    x, y = quad_grid.xy.T
    u, ux, uy, uxx, uxy, uyy = quad_derivatives(x, y)
    at = -0.9
    a11, a12, a22, b1, b2, c = coefficients(ScalarField(quad_grid, u), PhysicsParams(at))
    lap = uxx + uyy
    np.testing.assert_allclose(a11, 1 + uy**2, atol=1e-10)
    np.testing.assert_allclose(a12, -ux * uy, atol=1e-10)
    np.testing.assert_allclose(b1, 2 * (lap - at / u) * ux - 2 * (ux * uxx + uy * uxy), atol=1e-8)
    np.testing.assert_allclose(c, at * (1 + ux**2 + uy**2) / u**2, atol=1e-10)
