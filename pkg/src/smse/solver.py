"""Damped Newton and the continuity method in t.

The target problem Q_1[u] = 0 is reached from the minimal surface equation
Q_0[u] = 0 by marching t through [0, 1] with the boundary data held fixed.
Each accepted t is solved by Newton started from the previous solution.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constants as K
from .discretization import (
    LinearOperator, ScalarField, assemble_jacobian, assemble_residual, discrete_gradient,
    laplacian,
)
from .errors import (
    ContinuationError, DomainError, LinearSolveError, NonConvergenceError, ParameterError,
)
from .geometry import check_mean_convex
from .radial import PhysicsParams

log = logging.getLogger(__name__)


def linear_solve(op, rhs, rtol=K.LINEAR_RTOL):
    """Solve ``op x = rhs`` by sparse LU with iterative refinement.

    ``op`` may be a LinearOperator or any scipy sparse matrix.  Raises
    LinearSolveError when the factorization breaks down or the relative
    residual stays above ``rtol``.
    """
    A = op.matrix if isinstance(op, LinearOperator) else op
    A = sp.csc_matrix(A)
    b = np.asarray(rhs, dtype=float)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise LinearSolveError(f"sparse LU failed: {exc}") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("sparse LU produced non-finite values")
    rel = np.linalg.norm(b - A @ x) / nb
    for _ in range(K.LINEAR_MAX_REFINE):
        if rel <= rtol:
            break
        x = x + lu.solve(b - A @ x)
        rel = np.linalg.norm(b - A @ x) / nb
    if rel > rtol:
        raise LinearSolveError(f"relative residual {rel:.2e} above {rtol:.1e} after refinement")
    return x


@dataclass
class NewtonStats:
    iterations: int
    residual: float
    history: list
    backtracks: int = 0


def newton_solve(init, params, tol=K.NEWTON_TOL, max_iter=K.NEWTON_MAX_ITER):
    """Damped Newton for Q_t[u] = 0 at fixed t.

    Each step solves L du = -Q_t[u], caps the step so that
    min(u + lam du) >= 0.1 min(u), then halves lam until ||Q_t||_2 decreases
    (at most 20 times).  Converged when ||Q_t||_inf <= tol.

    Returns the solution field and a NewtonStats record.
    """
    u = init.values.copy()
    grid = init.grid
    if not np.all(u > 0):
        raise DomainError("Newton initial guess must be positive")
    r = assemble_residual(ScalarField(grid, u), params)
    rinf = float(np.max(np.abs(r)))
    history = [rinf]
    best = (rinf, u.copy())
    backtracks = 0
    for it in range(max_iter + 1):
        if rinf <= tol:
            return ScalarField(grid, u), NewtonStats(it, rinf, history, backtracks)
        if it == max_iter:
            break
        J = assemble_jacobian(ScalarField(grid, u), params)
        du = linear_solve(J, -r)
        umin = float(np.min(u))
        lam = 1.0
        neg = du < 0
        if np.any(neg):
            # largest lam with u + lam*du >= floor*min(u) everywhere
            room = (u[neg] - K.POSITIVITY_FLOOR * umin) / (-du[neg])
            lam = min(1.0, float(np.min(room)))
        r2 = np.linalg.norm(r)
        for _ in range(K.NEWTON_MAX_BACKTRACK + 1):
            trial = u + lam * du
            r_new = assemble_residual(ScalarField(grid, trial), params)
            if np.linalg.norm(r_new) < r2:
                break
            lam *= 0.5
            backtracks += 1
        else:
            # rounding in the residual is ~ eps * |diag(L)| * |u| at the stiffest cut node
            floor = np.finfo(float).eps * float(np.max(np.abs(J.matrix.diagonal()) * np.abs(u)))
            raise NonConvergenceError(
                f"line search failed at Newton iteration {it} (||Q||_inf={rinf:.3e}, "
                f"rounding floor ~{floor:.1e})",
                best=ScalarField(grid, best[1]), history=history,
            )
        u, r = trial, r_new
        rinf = float(np.max(np.abs(r)))
        history.append(rinf)
        if rinf < best[0]:
            best = (rinf, u.copy())
    raise NonConvergenceError(
        f"Newton did not reach ||Q||_inf <= {tol:.1e} in {max_iter} iterations "
        f"(best {best[0]:.3e})",
        best=ScalarField(grid, best[1]), history=history,
    )


def harmonic_extension(grid):
    """Discrete harmonic function with the grid's boundary values."""
    L, g = laplacian(grid)
    return ScalarField(grid, linear_solve(L, -g))


def solve_minimal(domain, grid, tol=K.NEWTON_TOL, max_iter=K.NEWTON_MAX_ITER, guess_scale=1.0):
    """Minimal surface graph (t = 0) with the grid's boundary data.

    Newton starts from the discrete harmonic extension of phi, optionally
    multiplied by ``guess_scale`` (used to probe uniqueness).
    """
    ok, kmin = check_mean_convex(domain, 256)
    if not ok:
        log.warning("domain is not mean convex (min boundary curvature %.3e)", kmin)
    init = harmonic_extension(grid)
    if guess_scale != 1.0:
        init = ScalarField(grid, init.values * guess_scale)
    params = PhysicsParams(0.0, 2, 0.0, allow_nonnegative=True)
    u, stats = newton_solve(init, params, tol, max_iter)
    return u, stats


@dataclass
class TraceStep:
    t: float
    newton_iterations: int
    final_residual_norm: float
    min_u: float
    max_grad: float
    step_accepted: bool

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class ContinuationTrace:
    """Per-step record of a continuation run; snapshots keyed by t."""

    steps: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    newton_tol: float = K.NEWTON_TOL
    minimal: object = None

    @property
    def accepted(self):
        return [s for s in self.steps if s.step_accepted]

    @property
    def accepted_t(self):
        return [s.t for s in self.accepted]

    def as_dict(self):
        return {
            "newton_tol": self.newton_tol,
            "steps": [s.as_dict() for s in self.steps],
            "snapshot_t": sorted(self.snapshots),
        }


@dataclass
class ContinuationOptions:
    """Step control for ``continuation_solve``.

    ``schedule`` fixes the t values (must end at 1); otherwise steps adapt:
    start at ``initial_step``, halve on Newton failure, grow by ``grow`` after
    an easy solve (at most ``easy_iters`` iterations), capped at ``max_step``.
    """

    initial_step: float = K.STEP_INITIAL
    max_step: float = K.STEP_MAX
    grow: float = K.STEP_GROW
    min_step: float = K.STEP_MIN
    easy_iters: int = K.EASY_NEWTON_ITERS
    newton_tol: float = K.NEWTON_TOL
    newton_max_iter: int = K.NEWTON_MAX_ITER
    schedule: tuple | None = None
    snapshots: tuple = ()
    minimal_guess_scale: float = 1.0


def _record(trace, t, stats, u, accepted):
    grad = np.linalg.norm(discrete_gradient(u), axis=1) if u is not None else np.array([np.nan])
    trace.steps.append(TraceStep(
        float(t), int(stats.iterations) if stats else -1,
        float(stats.residual) if stats else math.inf,
        float(np.min(u.values)) if u is not None else math.nan,
        float(np.max(grad)), bool(accepted),
    ))


def _want_snapshot(opts, t):
    return any(abs(t - s) <= 1e-12 for s in opts.snapshots)


def continuation_solve(domain, grid, alpha, opts=None, allow_nonnegative=False):
    """Solve Q_1[u] = 0 by continuation from the minimal surface at t = 0.

    Returns the t = 1 field and the trace; the t = 0 minimal surface v0 is
    kept as ``trace.minimal``.  For
    alpha = 0 (override required) the family is constant and one solve is
    performed.
    """
    opts = opts or ContinuationOptions()
    params = PhysicsParams(float(alpha), 2, 1.0, allow_nonnegative=allow_nonnegative)
    trace = ContinuationTrace(newton_tol=opts.newton_tol)
    u, stats = solve_minimal(domain, grid, opts.newton_tol, opts.newton_max_iter,
                             opts.minimal_guess_scale)
    trace.minimal = u
    _record(trace, 0.0, stats, u, True)
    if _want_snapshot(opts, 0.0):
        trace.snapshots[0.0] = u
    if alpha == 0.0:
        for s in opts.snapshots:
            trace.snapshots[float(s)] = u
        trace.steps[0].t = 1.0
        return u, trace

    stops = sorted({float(s) for s in opts.snapshots if 0.0 < s < 1.0})
    if opts.schedule is not None:
        sched = [float(t) for t in opts.schedule if t > 0]
        if not sched or abs(sched[-1] - 1.0) > 1e-15 or np.any(np.diff(sched) <= 0):
            raise ParameterError("schedule must be increasing and end at t = 1")
        targets = iter(sorted(set(sched) | set(stops)))
    else:
        targets = None

    t, dt = 0.0, opts.initial_step
    while t < 1.0:
        if targets is not None:
            t_next = next(targets)
        else:
            t_next = min(1.0, t + dt)
            for s in stops:
                if t < s < t_next - 1e-15:
                    t_next = s
                    break
        try:
            u_new, stats = newton_solve(u, params.at(t_next), opts.newton_tol,
                                        opts.newton_max_iter)
        except (NonConvergenceError, LinearSolveError, DomainError) as exc:
            _record(trace, t_next, None, None, False)
            if targets is not None:
                raise ContinuationError(f"fixed schedule failed at t={t_next}: {exc}",
                                        trace) from exc
            dt = 0.5 * (t_next - t)
            log.info("Newton failed at t=%.6g, halving step to %.3g", t_next, dt)
            if dt < opts.min_step:
                raise ContinuationError(
                    f"continuation stalled at t={t:.6g}: step {dt:.2e} below {opts.min_step:.1e}",
                    trace) from exc
            continue
        _record(trace, t_next, stats, u_new, True)
        u, t = u_new, t_next
        if _want_snapshot(opts, t):
            trace.snapshots[t] = u
        if targets is None and stats.iterations <= opts.easy_iters:
            dt = min(opts.max_step, dt * opts.grow)
    if _want_snapshot(opts, 1.0):
        trace.snapshots[1.0] = u
    return u, trace
