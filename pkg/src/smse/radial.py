"""Rotational solutions u(|x|) and the radial Dirichlet problem on balls.

Profiles are integrated as plane curves in arclength form,

    dr/ds = cos(theta),  du/ds = sin(theta),
    dtheta/ds = alpha*cos(theta)/u - (n - 1)*sin(theta)/r,

which stays regular where the graph becomes vertical.  At the axis the
second term is replaced by its limit, giving dtheta/ds = alpha/(n*u0).

Homotheties ``lam * u(x / lam)`` map solutions to solutions, so every
profile is a rescaling of the one with u(0) = 1; that profile is cached per
(alpha, n, tol).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import constants as K
from .errors import InfeasibleError, IntegrationError, ParameterError


@dataclass(frozen=True)
class PhysicsParams:
    """Equation constants: alpha, space dimension n and continuation level t.

    ``alpha >= 0`` is rejected unless ``allow_nonnegative`` is set.
    """

    alpha: float
    n: int = 2
    t: float = 1.0
    allow_nonnegative: bool = False

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 2):
            raise ParameterError(f"dimension n must be an integer >= 2, got {self.n!r}")
        if not 0.0 <= self.t <= 1.0:
            raise ParameterError(f"continuation parameter t={self.t} outside [0, 1]")
        if not math.isfinite(self.alpha):
            raise ParameterError("alpha must be finite")
        if self.alpha >= 0 and not self.allow_nonnegative:
            raise ParameterError(
                f"alpha={self.alpha} >= 0 is outside the supported theory; "
                "set allow_nonnegative to override"
            )

    @property
    def alpha_t(self):
        return self.alpha * self.t

    def at(self, t):
        return replace(self, t=float(t))


@dataclass(frozen=True)
class RadialProfile:
    """A rotational solution sampled along its generating curve.

    ``s, r, u, theta`` are the accepted integrator nodes (arclength, radius,
    height, tangent angle).  ``R`` is the extrapolated radius where the
    profile reaches height zero.  Profiles produced by ``scale_profile``
    share the canonical dense interpolant and carry the scale factor.
    """

    params: PhysicsParams
    u0: float
    s: np.ndarray
    r: np.ndarray
    u: np.ndarray
    theta: np.ndarray
    R: float
    scale: float = 1.0
    _dense: object = field(default=None, repr=False, compare=False)
    _q_end: float = field(default=1.0, repr=False, compare=False)

    @property
    def samples(self):
        return np.column_stack([self.s, self.r, self.u, self.theta])

    def height(self, radius):
        """u at the given radius (scalar or array), 0 <= radius <= R."""
        rq = np.asarray(radius, dtype=float)
        out = self._height(np.atleast_1d(rq).ravel())
        return float(out[0]) if rq.ndim == 0 else out.reshape(rq.shape)

    def _height(self, rq):
        if np.any(rq < 0) or np.any(rq > self.R * (1 + 1e-12)):
            raise ValueError("radius outside the profile's maximal domain [0, R]")
        lam = self.scale
        rc = rq / lam
        r_s, s_s = self.r / lam, self.s / lam
        out = np.empty_like(rc)
        tail = rc >= r_s[-1]
        if np.any(tail):
            # power-law model of the nearly vertical end: R - r ~ u^(1+q)
            Rc, ue = self.R / lam, self.u[-1] / lam
            gap = max(Rc - r_s[-1], 1e-300)
            frac = np.clip((Rc - rc[tail]) / gap, 0.0, 1.0)
            out[tail] = ue * frac ** (1.0 / (1.0 + self._q_end))
        body = ~tail
        if np.any(body):
            x = rc[body]
            k = np.clip(np.searchsorted(r_s, x, side="right") - 1, 0, len(r_s) - 2)
            lo, hi = s_s[k].copy(), s_s[k + 1].copy()
            for _ in range(56):
                mid = 0.5 * (lo + hi)
                below = self._dense(mid)[0] < x
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            out[body] = self._dense(0.5 * (lo + hi))[1]
        return lam * out


def _curvature_rhs(alpha, n):
    def rhs(s, y):
        r, u, th = y
        c, sn = math.cos(th), math.sin(th)
        if r > 0.0:
            dth = alpha * c / u - (n - 1) * sn / r
        else:
            dth = alpha * c / (n * u)
        return [c, sn, dth]

    return rhs


def integrate_profile(params, u0, tol=K.RADIAL_TOL):
    """Integrate the rotational solution with apex height ``u0``.

    Stops when u <= 1e-6*u0 or theta <= -pi/2 + 1e-6, then extrapolates the
    remaining sliver to u = 0 with the local power law of the tangent angle.

    Raises
    ------
    ParameterError
        alpha >= 0 without override, u0 <= 0, or tol outside [1e-12, 1e-4].
    IntegrationError
        The integrator failed or never reached a stopping condition.
    """
    if not u0 > 0:
        raise ParameterError("apex height u0 must be positive")
    if not 1e-12 <= tol <= 1e-4:
        raise ParameterError(f"tol={tol} outside [1e-12, 1e-4]")
    alpha = params.alpha_t
    n = params.n
    u_stop = K.U_STOP_REL * u0

    def hit_bottom(s, y):
        return y[1] - u_stop

    def hit_vertical(s, y):
        return y[2] + math.pi / 2 - K.THETA_STOP

    hit_bottom.terminal = hit_vertical.terminal = True
    hit_bottom.direction = hit_vertical.direction = -1

    s_max = 50.0 * u0 * max(1.0, 1.0 / max(abs(alpha), 1e-3))
    sol = solve_ivp(
        _curvature_rhs(alpha, n), (0.0, s_max), [0.0, u0, 0.0], method="DOP853",
        rtol=tol, atol=tol * u0, events=(hit_bottom, hit_vertical), dense_output=True,
    )
    if sol.status == -1:
        raise IntegrationError(f"radial integration failed: {sol.message}")
    if sol.status != 1:
        raise IntegrationError("profile did not reach u = 0 or a vertical tangent "
                               f"within arclength {s_max:g} (alpha={alpha})")
    s, (r, u, th) = sol.t, sol.y
    if np.any(np.diff(r) <= 0):
        raise IntegrationError("radius stopped increasing before termination")
    phi_end = th[-1] + math.pi / 2
    sn = math.sin(th[-1])
    dth = _curvature_rhs(alpha, n)(s[-1], [r[-1], u[-1], th[-1]])[2]
    q = (u[-1] / phi_end) * dth / sn if phi_end > 0 else 1.0
    q = min(max(q, 0.0), 4.0)
    R = r[-1] + math.tan(max(phi_end, 0.0)) * u[-1] / (1.0 + q)
    return RadialProfile(params, float(u0), s, r, u, th, float(R), 1.0, sol.sol, float(q))


def scale_profile(profile, lam):
    """Homothetic image lam * u(x / lam) of a profile."""
    lam = float(lam)
    if not lam > 0:
        raise ParameterError("scale factor must be positive")
    if lam == 1.0:
        return profile
    return replace(
        profile,
        u0=lam * profile.u0,
        s=lam * profile.s,
        r=lam * profile.r,
        u=lam * profile.u,
        R=lam * profile.R,
        scale=lam * profile.scale,
    )


@lru_cache(maxsize=64)
def _canonical(alpha, n, tol):
    return integrate_profile(PhysicsParams(alpha, n, 1.0, allow_nonnegative=True), 1.0, tol)


def canonical_profile(params, tol=K.RADIAL_TOL):
    """Profile with apex height 1 for alpha*t; cached."""
    if params.alpha_t >= 0:
        raise ParameterError("radial profiles need alpha*t < 0")
    return _canonical(float(params.alpha_t), int(params.n), float(tol))


def fit_radial_dirichlet(params, r, c, bracket=None, tol=K.RADIAL_TOL):
    """Radial solution on the ball of radius ``r`` with boundary value ``c``.

    Solves lam * U(r / lam) = c for the scale lam of the canonical profile U.
    The left side tends to -c as lam decreases to r / R_U and grows without
    bound as lam increases, so a sign change is always available.

    Returns
    -------
    lam : float
    profile : RadialProfile
        The scaled profile; its restriction to [0, r] solves the problem.
    """
    if not (r > 0 and c > 0):
        raise ParameterError("ball radius and boundary value must be positive")
    U = canonical_profile(params, tol)
    lam_min = r / U.R

    def g(lam):
        x = r / lam
        return lam * (U.height(min(x, U.R))) - c

    if bracket is None:
        lo, hi = lam_min, max(c, lam_min) * 2.0
    else:
        lo, hi = max(float(bracket[0]), lam_min), float(bracket[1])
    g_lo = g(lo)
    for _ in range(200):
        if g_lo < 0:
            break
        lo = 0.5 * (lo + lam_min) if lo > lam_min * (1 + 1e-15) else lam_min
        g_lo = g(lo)
    for _ in range(200):
        if g(hi) > 0:
            break
        hi *= 2.0
    else:
        raise InfeasibleError(f"could not bracket the scale factor for r={r}, c={c}")
    if not g_lo < 0:
        raise InfeasibleError(f"could not bracket the scale factor for r={r}, c={c}")
    lam = brentq(g, lo, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=500)
    return lam, scale_profile(U, lam)


def height_bound_C1(params, R, phi_max, tol=K.RADIAL_TOL):
    """Apex of the radial solution equal to ``phi_max`` on the sphere of radius R.

    Any solution on a domain inside that ball, with boundary data at most
    ``phi_max``, stays below this value.
    """
    lam, prof = fit_radial_dirichlet(params, R, phi_max, tol=tol)
    return prof.u0


def is_concave_decreasing(profile, tol=1e-8):
    """Discrete monotonicity/concavity of u(r) from the sample polyline."""
    r, u = profile.r, profile.u
    du = np.diff(u)
    dr = np.diff(r)
    slopes = du / dr
    decreasing = bool(np.all(du <= tol * profile.u0))
    concave = bool(np.all(np.diff(slopes) <= tol * (1.0 + np.abs(slopes[1:]))))
    return decreasing, concave
