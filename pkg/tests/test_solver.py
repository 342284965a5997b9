import math

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import SQRT3_2, hemisphere_solution, hemisphere_values
from smse import geometry as G
from smse.discretization import ScalarField, assemble_residual
from smse.errors import ContinuationError, LinearSolveError, NonConvergenceError, ParameterError
from smse.radial import PhysicsParams
from smse.solver import (
    ContinuationOptions, continuation_solve, harmonic_extension, linear_solve, newton_solve,
    solve_minimal,
)


# -- linear solves --------------------------------------------------------------

def test_linear_solve_identity():
    b = np.arange(1.0, 6.0)
    np.testing.assert_array_equal(linear_solve(sp.identity(5, format="csr"), b), b)


def test_linear_solve_tridiagonal_by_hand():
    # 2x_i - x_{i-1} - x_{i+1} = 1 with x_0 = x_6 = 0 has x_i = i(6 - i)/2
    A = sp.diags([-np.ones(4), 2 * np.ones(5), -np.ones(4)], [-1, 0, 1], format="csr")
    np.testing.assert_allclose(linear_solve(A, np.ones(5)), [2.5, 4.0, 4.5, 4.0, 2.5], atol=1e-14)


def test_linear_solve_nonsymmetric_vs_dense(rng):
    A = rng.normal(size=(100, 100))
    A += np.diag(np.sum(np.abs(A), axis=1) + 1.0)
    b = rng.normal(size=100)
    x = linear_solve(sp.csr_matrix(A), b)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-10)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-12


def test_linear_solve_singular():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(LinearSolveError):
        linear_solve(A, np.array([1.0, 0.0]))


# -- minimal surface --------------------------------------------------------------

def test_minimal_constant_data():
    D = G.ellipse(0.6, 0.4, phi=1.3)
    grid = G.build_grid(D, 1 / 16)
    v0, stats = solve_minimal(D, grid)
    np.testing.assert_allclose(v0.values, 1.3, atol=1e-12)


def test_minimal_tilted_data_respects_maximum_principle():
    D = G.disk(1.0, phi="1+0.1*x")
    h = 1 / 16
    grid = G.build_grid(D, h)
    v0, stats = solve_minimal(D, grid)
    assert stats.residual <= 1e-10
    assert np.ptp(v0.values) > 0.1
    assert v0.values.min() >= 0.9 - h and v0.values.max() <= 1.1 + h
    assert np.all(v0.values > 0)


def test_harmonic_extension_of_linear_data_is_exact():
    D = G.disk(0.5, phi="1+0.3*x-0.2*y")
    grid = G.build_grid(D, 1 / 16)
    x, y = grid.xy.T
    np.testing.assert_allclose(harmonic_extension(grid).values, 1 + 0.3 * x - 0.2 * y, atol=1e-12)


# -- Newton ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def hemi32():
    return hemisphere_solution(1 / 32)


def test_newton_from_exact_solution(hemi32):
    D, grid, u, _ = hemi32
    init = ScalarField(grid, hemisphere_values(grid.xy))
    sol, stats = newton_solve(init, PhysicsParams(-2.0))
    assert stats.iterations <= 2
    np.testing.assert_allclose(sol.values, u.values, atol=1e-9)


def test_newton_zero_iterations_for_constant():
    D = G.disk(0.5, phi=1.0)
    grid = G.build_grid(D, 1 / 16)
    init = ScalarField(grid, np.ones(grid.n_active))
    _, stats = newton_solve(init, PhysicsParams(-1.0, t=0.0))
    assert stats.iterations == 0


def test_newton_from_inflated_guess_reaches_same_solution(hemi32):
    _, grid, u, _ = hemi32
    exact = hemisphere_values(grid.xy)
    init = np.where(grid.interior_mask, 1.5 * exact, exact)
    sol, _ = newton_solve(ScalarField(grid, init), PhysicsParams(-2.0))
    assert np.max(np.abs(sol.values - u.values)) <= 1e-8


def test_newton_quadratic_convergence(hemi32):
    _, grid, _, _ = hemi32
    init = ScalarField(grid, np.full(grid.n_active, SQRT3_2))
    _, stats = newton_solve(init, PhysicsParams(-2.0))
    hist = np.array(stats.history)
    # pairs above the rounding floor
    tail = [(a, b) for a, b in zip(hist[:-1], hist[1:]) if b > 1e-9 and a < 1e-1]
    assert tail, hist
    assert all(b <= 50.0 * a * a for a, b in tail)


def test_newton_nonconvergence_carries_best(hemi32):
    _, grid, _, _ = hemi32
    init = ScalarField(grid, np.full(grid.n_active, SQRT3_2))
    with pytest.raises(NonConvergenceError) as info:
        newton_solve(init, PhysicsParams(-2.0), max_iter=1)
    assert info.value.best is not None and len(info.value.history) == 2


# -- continuation ------------------------------------------------------------------

def test_hemisphere_continuation(hemi32):
    _, grid, u, trace = hemi32
    assert np.max(np.abs(u.values - hemisphere_values(grid.xy))) <= grid.h
    t = trace.accepted_t
    assert t[0] == 0.0 and t[-1] == 1.0 and np.all(np.diff(t) > 0)
    assert all(s.final_residual_norm <= trace.newton_tol for s in trace.accepted)
    assert all(s.min_u > 0 for s in trace.accepted)


def test_snapshots_ordered_in_t():
    D = G.ellipse(0.6, 0.4, phi="1+0.1*x")
    grid = G.build_grid(D, 1 / 16)
    _, trace = continuation_solve(D, grid, -1.0, ContinuationOptions(snapshots=(0.0, 0.5, 1.0)))
    s = trace.snapshots
    assert sorted(s) == [0.0, 0.5, 1.0]
    assert np.max(s[0.0].values - s[0.5].values) <= 1e-8
    assert np.max(s[0.5].values - s[1.0].values) <= 1e-8
    assert 0.5 in trace.accepted_t


def test_alpha_zero_single_step():
    D = G.disk(0.5, phi="1+0.1*x")
    grid = G.build_grid(D, 1 / 16)
    with pytest.raises(ParameterError):
        continuation_solve(D, grid, 0.0)
    u, trace = continuation_solve(D, grid, 0.0, allow_nonnegative=True)
    assert len(trace.steps) == 1 and trace.steps[0].t == 1.0
    np.testing.assert_array_equal(u.values, trace.minimal.values)


def test_schedules_agree():
    D = G.disk(0.5, phi="1+0.1*x")
    grid = G.build_grid(D, 1 / 16)
    ua, _ = continuation_solve(D, grid, -2.0)
    ub, tb = continuation_solve(D, grid, -2.0, ContinuationOptions(schedule=(0.1, 0.3, 0.6, 1.0)))
    assert tb.accepted_t == [0.0, 0.1, 0.3, 0.6, 1.0]
    assert np.max(np.abs(ua.values - ub.values)) <= 1e-8


def test_bad_schedule():
    D = G.disk(0.5, phi=1.0)
    grid = G.build_grid(D, 1 / 8)
    for sched in ((0.5,), (0.5, 0.3, 1.0)):
        with pytest.raises(ParameterError):
            continuation_solve(D, grid, -1.0, ContinuationOptions(schedule=sched))


def test_step_underflow_raises_with_trace():
    D = G.disk(0.5, phi=1.0)
    grid = G.build_grid(D, 1 / 16)
    opts = ContinuationOptions(newton_max_iter=0, min_step=0.05)
    with pytest.raises(ContinuationError) as info:
        continuation_solve(D, grid, -1.0, opts)
    trace = info.value.trace
    assert trace.accepted_t == [0.0]
    assert not any(s.step_accepted for s in trace.steps[1:])


@pytest.mark.parametrize("lam", [2.0, 0.5])
def test_discrete_homothety_is_exact(lam):
    doc = {"shape": "ellipse", "a": 0.6, "b": 0.4, "phi": {"kind": "expression", "expr": "1+0.1*x"}}
    D = G.domain_from_dict(doc)
    S = G.domain_from_dict(G.scaled_domain_dict(doc, lam))
    h = 1 / 16
    g, gs = G.build_grid(D, h), G.build_grid(S, lam * h)
    u, _ = continuation_solve(D, g, -1.0)
    us, _ = continuation_solve(S, gs, -1.0)
    np.testing.assert_allclose(gs.xy, lam * g.xy, atol=1e-12)
    np.testing.assert_allclose(us.values, lam * u.values, atol=1e-8)
