"""Numerical certification of the a priori estimates.

Checks never raise on failure; each returns a ``Check`` with a pass flag,
the worst margin (positive means satisfied) and where it occurred.

The upper boundary barrier is

    w = a*log(1 + b*d(x)) + phi(x),   a = c/log(1 + b),

on the band {d < eps}, with phi the boundary data as a function on the
plane.  ``extension="normal"`` uses phi(pi(x)) instead; that extension is
constant along normals, but its Hessian carries the boundary curvature and
usually forces very steep barriers.  Its constants come from a ladder search over (b,
eps) that stops at the first pair for which the scalar majorant of Q[w]
is negative on [0, eps].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import constants as K
from .discretization import ScalarField, assemble_residual, discrete_gradient
from .errors import (
    BarrierConstructionError, ContinuationError, DomainError, GeometryError, SMSEError,
)
from .geometry import (
    arclength_samples, circumscribed_ball, max_interior_distance, project_boundary,
    project_with_distance,
)
from .radial import PhysicsParams, height_bound_C1
from .solver import ContinuationOptions, continuation_solve


@dataclass
class Check:
    name: str
    passed: bool
    margin: float
    location: list | None = None
    detail: str = ""

    def as_dict(self):
        return {"name": self.name, "pass": bool(self.passed), "margin": float(self.margin),
                "location": None if self.location is None else [float(v) for v in self.location],
                "detail": self.detail}

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        where = "" if self.location is None else " at (" + ", ".join(f"{v:.4g}" for v in self.location) + ")"
        return f"[{flag}] {self.name}: margin {self.margin:.3e}{where}"


@dataclass
class EstimateReport:
    C1: float
    C2: float
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def add(self, check):
        if any(c.name == check.name for c in self.checks):
            raise ValueError(f"duplicate check {check.name!r}")
        self.checks.append(check)

    def as_dict(self):
        return {"format": 1, "C1": self.C1, "C2": self.C2,
                "checks": [c.as_dict() for c in self.checks]}

    def text(self):
        head = f"C1 = {self.C1:.6g}\nC2 = {self.C2:.6g}"
        return "\n".join([head] + [c.line() for c in self.checks])


# ---------------------------------------------------------------------------
# boundary data norms on the tubular band
# ---------------------------------------------------------------------------

def _inner_normals(domain, p):
    g = domain.level.gradient(p)
    return -g / np.linalg.norm(g, axis=1)[:, None]


def _extension(domain, extension):
    if extension == "ambient":
        return lambda Y: domain.boundary_phi(Y)
    if extension == "normal":
        return lambda Y: domain.boundary_phi(project_boundary(domain, Y))
    raise ValueError(f"unknown phi extension {extension!r}")


def phi_norms(domain, eps, m=192, layers=9, extension="ambient"):
    """sup|phi|, sup|D phi| and sum_ij sup|phi_ij| of the extended data on {d <= eps}.

    Derivatives are central differences on points p + t*nu spread over the
    band.
    """
    p = arclength_samples(domain, m)
    nu = _inner_normals(domain, p)
    ts = np.linspace(0.0, eps, layers)
    X = (p[None, :, :] + ts[:, None, None] * nu[None, :, :]).reshape(-1, 2)
    delta = 1e-4 * domain.diameter
    f = _extension(domain, extension)
    ex, ey = np.array([delta, 0.0]), np.array([0.0, delta])
    f0 = f(X)
    fxp, fxm, fyp, fym = f(X + ex), f(X - ex), f(X + ey), f(X - ey)
    gx = (fxp - fxm) / (2 * delta)
    gy = (fyp - fym) / (2 * delta)
    fxx = (fxp - 2 * f0 + fxm) / delta**2
    fyy = (fyp - 2 * f0 + fym) / delta**2
    fxy = (f(X + ex + ey) - f(X + ex - ey) - f(X - ex + ey) + f(X - ex - ey)) / (4 * delta**2)
    sup0 = max(float(np.max(np.abs(f0))), domain.phi_max)
    sup1 = float(np.max(np.hypot(gx, gy)))
    sup2 = float(np.max(np.abs(fxx)) + np.max(np.abs(fyy)) + 2 * np.max(np.abs(fxy)))
    return sup0, sup1, sup2


# ---------------------------------------------------------------------------
# barrier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BarrierSpec:
    """Constants of w = a*log(1 + b*d) + phi on {d < epsilon}."""

    a: float
    b: float
    c_const: float
    epsilon: float
    beta: float
    mu: float
    C1: float
    alpha: float
    phi_sup: float
    dphi_sup: float
    d2phi_sup: float
    extension: str = "ambient"

    def h(self, t):
        return self.a * np.log1p(self.b * np.asarray(t, dtype=float))

    def hprime(self, t):
        return self.a * self.b / (1.0 + self.b * np.asarray(t, dtype=float))

    def majorant(self, t):
        """Upper bound for Q[w] at distance t from the boundary.

        (beta - 1/a) h'^2 + 2 beta |D phi| h' + beta (1 + |D phi|^2), with
        h' = a b / (1 + b t).
        """
        hp = self.hprime(t)
        return ((self.beta - 1.0 / self.a) * hp**2 + 2.0 * self.beta * self.dphi_sup * hp
                + self.beta * (1.0 + self.dphi_sup**2))

    def majorant_max(self):
        """max of the majorant over [0, epsilon] (exact for the quadratic in h')."""
        ts = np.linspace(0.0, self.epsilon, K.BARRIER_T_SAMPLES)
        vals = [float(np.max(self.majorant(ts)))]
        q = self.beta - 1.0 / self.a
        if q < 0:
            hv = -self.beta * self.dphi_sup / q
            lo, hi = float(self.hprime(self.epsilon)), float(self.hprime(0.0))
            if lo <= hv <= hi:
                vals.append(q * hv**2 + 2 * self.beta * self.dphi_sup * hv
                            + self.beta * (1 + self.dphi_sup**2))
        return max(vals)

    def invariants(self):
        """The three defining relations as (name, holds, margin)."""
        L = math.log1p(self.b)
        return [
            ("a*log(1+b) = c", abs(self.a * L - self.c_const) <= 1e-12 * max(1.0, self.c_const),
             -abs(self.a * L - self.c_const)),
            ("c >= mu*log(1+b)/log(1+b*eps)",
             self.c_const >= self.mu * L / math.log1p(self.b * self.epsilon) * (1 - 1e-14),
             self.c_const - self.mu * L / math.log1p(self.b * self.epsilon)),
            ("beta - log(1+b)/c < 0", self.beta - L / self.c_const < 0, L / self.c_const - self.beta),
        ]

    def evaluate(self, domain, x):
        """(w, d, pi(x)) at points x."""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        p, d = project_with_distance(domain, x)
        src = x if self.extension == "ambient" else p
        w = self.h(np.maximum(d, 0.0)) + domain.boundary_phi(src)
        return w, d, p

    def with_epsilon(self, eps):
        return replace(self, epsilon=float(eps))

    def as_dict(self):
        return dict(self.__dict__)


def _barrier_constants(alpha, C1, b, eps, norms, extension="ambient"):
    sup0, sup1, sup2 = norms
    mu = C1 + sup0
    L = math.log1p(b)
    c = mu * L / math.log1p(b * eps)
    a = c / L
    if c <= sup0:
        return None
    beta = -alpha / (c - sup0) + sup2
    return BarrierSpec(a, b, c, eps, beta, mu, C1, alpha, sup0, sup1, sup2, extension)


def build_barrier(domain, params, C1, d_max=None, extension="ambient"):
    """First (b, eps) on the ladder whose majorant is negative on [0, eps].

    b runs over 10, 10^2, ..., 10^8 and, for each b, eps over d_max/2,
    d_max/4, ...  With the ambient extension a pair also needs
    h'(eps) >= 2 sup|D phi|, under which the majorant still bounds Q[w].
    Raises BarrierConstructionError when the ladder is exhausted.
    """
    if params.alpha >= 0:
        raise BarrierConstructionError("the boundary barrier needs alpha < 0")
    if d_max is None:
        d_max = max_interior_distance(domain)
    norms_cache = {}
    tried = 0
    for b in K.BARRIER_B_LADDER:
        for k in range(1, K.BARRIER_EPS_LEVELS + 1):
            eps = d_max / 2**k
            if eps not in norms_cache:
                try:
                    norms_cache[eps] = phi_norms(domain, eps, extension=extension)
                except GeometryError:
                    norms_cache[eps] = None
            norms = norms_cache[eps]
            if norms is None:
                continue
            tried += 1
            spec = _barrier_constants(params.alpha, C1, b, eps, norms, extension)
            if spec is None or not all(ok for _, ok, _ in spec.invariants()):
                continue
            if extension == "ambient" and spec.hprime(eps) < 2.0 * spec.dphi_sup:
                # keeps 1 + |Dw|^2 - |D phi|^2 >= 0 when D phi is not tangential
                continue
            if spec.majorant_max() < 0:
                return spec
    raise BarrierConstructionError(f"no admissible (b, eps) among {tried} ladder pairs")


def verify_barrier(spec, u, grid):
    """Discrete Q[w] < 0, u <= w on the band, and inner-edge dominance.

    The scalar majorant is re-checked too, so a report carries the analytic
    sign test next to the discrete one.
    """
    domain = grid.domain
    w, d, _ = spec.evaluate(domain, grid.xy)
    band = d < spec.epsilon
    params = PhysicsParams(spec.alpha, 2, 1.0)
    checks = []
    if not np.any(band):
        checks.append(Check("barrier Q[w] < 0 on band", False, -math.inf, None, "band holds no nodes"))
        checks.append(Check("u <= w on band", False, -math.inf, None, "band holds no nodes"))
    else:
        try:
            q = assemble_residual(ScalarField(grid, w), params)
        except DomainError as exc:
            # w is not positive everywhere: Q[w] is undefined, report as failure
            q = np.full(len(w), np.inf)
        qb = np.where(band, q, -np.inf)
        k = int(np.argmax(qb))
        checks.append(Check("barrier Q[w] < 0 on band", bool(qb[k] < 0), float(-qb[k]),
                            grid.xy[k].tolist(), f"{int(band.sum())} band nodes"))
        gap = np.where(band, w - u.values, np.inf)
        k = int(np.argmin(gap))
        checks.append(Check("u <= w on band", bool(gap[k] >= -K.ORDER_TOL), float(gap[k] + K.ORDER_TOL),
                            grid.xy[k].tolist()))
    edge = spec.a * math.log1p(spec.b * spec.epsilon)
    checks.append(Check("a*log(1+b*eps) >= C1", edge >= spec.C1, edge - spec.C1))
    mmax = spec.majorant_max()
    checks.append(Check("majorant < 0 on [0, eps]", mmax < 0, -mmax))
    return checks


# ---------------------------------------------------------------------------
# estimates
# ---------------------------------------------------------------------------

def height_constant(domain, alpha, inflate=None):
    """C1 from the radial solution on a ball enclosing the domain."""
    center, R = circumscribed_ball(domain, inflate)
    return height_bound_C1(PhysicsParams(alpha, 2, 1.0), R, domain.phi_max)


def verify_height(u, domain, C1, h=None):
    """min_boundary phi <= u <= C1 (+ slack proportional to h)."""
    grid = u.grid
    h = grid.h if h is None else h
    phi_lo = min(domain.phi_min, float(np.nanmin(grid.boundary_values)))
    k_lo = int(np.argmin(u.values))
    k_hi = int(np.argmax(u.values))
    lo_margin = float(u.values[k_lo] - phi_lo + K.ORDER_TOL)
    hi_margin = float(C1 + K.HEIGHT_SLACK_H * h - u.values[k_hi])
    return [
        Check("height: min u >= min phi", lo_margin >= 0, lo_margin, grid.xy[k_lo].tolist()),
        Check("height: max u <= C1", hi_margin >= 0, hi_margin, grid.xy[k_hi].tolist()),
    ]


def verify_gradient_interior(u):
    """Interior max |Du| is no larger than the boundary-ring max, up to O(h)."""
    grid = u.grid
    g = np.linalg.norm(discrete_gradient(u), axis=1)
    gmax = float(np.max(g))
    inner = grid.interior_mask
    ring = grid.ring_mask
    gi = float(np.max(g[inner])) if np.any(inner) else 0.0
    gr = float(np.max(g[ring])) if np.any(ring) else 0.0
    k = int(np.argmax(g))
    margin = gr + K.GRADIENT_SLACK_H * grid.h * gmax - gi
    return Check("gradient maximum on boundary ring", margin >= 0, margin, grid.xy[k].tolist(),
                 f"interior {gi:.6g}, ring {gr:.6g}")


def verify_comparison(u, v0, alpha):
    """v0 <= u nodewise and Q_1[v0] > 0 (the minimal graph is a subsolution)."""
    grid = u.grid
    diff = u.values - v0.values
    k = int(np.argmin(diff))
    order = Check("comparison: v0 <= u", bool(diff[k] >= -K.ORDER_TOL),
                  float(diff[k] + K.ORDER_TOL), grid.xy[k].tolist())
    if alpha < 0:
        q = assemble_residual(v0, PhysicsParams(alpha, 2, 1.0))
        j = int(np.argmin(q))
        sub = Check("comparison: Q_1[v0] > 0", bool(q[j] > 0), float(q[j]), grid.xy[j].tolist())
    else:
        sub = Check("comparison: Q_1[v0] > 0", True, 0.0, None, "alpha = 0: v0 solves Q_1")
    return [order, sub]


def boundary_gradient_of_barrier(spec, domain, m=512):
    """sup over the boundary of |Dw| = |h'(0) nu + D phi|."""
    p = arclength_samples(domain, m)
    nu = _inner_normals(domain, p)
    delta = 1e-4 * domain.diameter
    f = _extension(domain, spec.extension)
    ex, ey = np.array([delta, 0.0]), np.array([0.0, delta])
    if spec.extension == "normal":
        # phi(pi(x)) is constant along nu; only the tangential part survives
        tau = np.column_stack([-nu[:, 1], nu[:, 0]])
        dphi = ((f(p + delta * tau) - f(p - delta * tau)) / (2 * delta))[:, None] * tau
    else:
        dphi = np.column_stack([(f(p + ex) - f(p - ex)) / (2 * delta),
                                (f(p + ey) - f(p - ey)) / (2 * delta)])
    return float(np.max(np.linalg.norm(spec.a * spec.b * nu + dphi, axis=1)))


def gradient_bound_C2(spec, v0, grid):
    """max(|Dw| on the boundary, |Dv0| on the boundary ring)."""
    dw = boundary_gradient_of_barrier(spec, grid.domain)
    g0 = np.linalg.norm(discrete_gradient(v0), axis=1)
    dv0 = float(np.max(g0[grid.ring_mask])) if np.any(grid.ring_mask) else 0.0
    return max(dw, dv0)


def verify_gradient_bound(u, C2):
    grid = u.grid
    g = np.linalg.norm(discrete_gradient(u), axis=1)
    ring = grid.ring_mask
    k = int(np.argmax(np.where(ring, g, -np.inf)))
    margin = C2 * (1 + K.C2_SLACK_H * grid.h) - float(g[k])
    return Check("boundary gradient <= C2", margin >= 0, margin, grid.xy[k].tolist())


UNIQUENESS_SCHEDULES = (
    ("fixed 0.25 vs fixed 0.1",
     ContinuationOptions(schedule=(0.25, 0.5, 0.75, 1.0)),
     ContinuationOptions(schedule=tuple(np.round(np.arange(1, 11) / 10, 12)))),
    ("adaptive vs fixed 0.5",
     ContinuationOptions(),
     ContinuationOptions(schedule=(0.5, 1.0))),
    ("adaptive vs adaptive with perturbed v0 guess",
     ContinuationOptions(),
     ContinuationOptions(initial_step=0.1, minimal_guess_scale=1.2)),
)


def verify_uniqueness(domain, grid, alpha, pairs=UNIQUENESS_SCHEDULES):
    """Run continuation under different schedules and compare at t = 1."""
    out = []
    for name, oa, ob in pairs:
        try:
            ua, _ = continuation_solve(domain, grid, alpha, oa)
            ub, _ = continuation_solve(domain, grid, alpha, ob)
        except (ContinuationError, SMSEError) as exc:
            out.append(Check(f"uniqueness: {name}", False, math.nan, None, f"inconclusive: {exc}"))
            continue
        diff = np.abs(ua.values - ub.values)
        k = int(np.argmax(diff))
        out.append(Check(f"uniqueness: {name}", bool(diff[k] <= K.UNIQUENESS_TOL),
                         float(K.UNIQUENESS_TOL - diff[k]), grid.xy[k].tolist()))
    return out


def certify(domain, grid, alpha, u, v0, C1=None, barrier=None):
    """Run every estimate check on a solved field and collect a report.

    Barrier construction failure is recorded as a failed check, not raised.
    """
    if C1 is None:
        C1 = height_constant(domain, alpha, inflate=grid.h)
    report = EstimateReport(C1=float(C1), C2=math.nan)
    for c in verify_height(u, domain, C1):
        report.add(c)
    report.add(verify_gradient_interior(u))
    for c in verify_comparison(u, v0, alpha):
        report.add(c)
    try:
        spec = barrier or build_barrier(domain, PhysicsParams(alpha, 2, 1.0), C1)
    except BarrierConstructionError as exc:
        report.add(Check("barrier construction", False, math.nan, None, str(exc)))
        return report
    report.add(Check("barrier construction", True, 0.0, None,
                     f"b={spec.b:g}, eps={spec.epsilon:.4g}, a={spec.a:.4g}"))
    for name, ok, margin in spec.invariants():
        report.add(Check(f"barrier invariant: {name}", bool(ok), float(margin)))
    for c in verify_barrier(spec, u, grid):
        report.add(c)
    report.C2 = gradient_bound_C2(spec, v0, grid)
    report.add(verify_gradient_bound(u, report.C2))
    return report
