"""Implicit planar domains, distance queries and cut-cell Cartesian grids.

A domain is the open set ``{F < 0}`` of a level function ``F`` together with
positive boundary data ``phi``, given as a function on the plane.  Where a
node is snapped onto the boundary it takes ``phi(pi(x))``, the value at its
closest boundary point.

All point queries accept either a single point of shape ``(2,)`` or an array
of shape ``(N, 2)`` and return results of the matching shape.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial.distance import pdist

from . import constants as K
from .errors import GeometryError, ResolutionError
from .expr import parse_expression

INTERIOR, BOUNDARY_ADJACENT, EXTERIOR = 0, 1, 2

# opposite pairs: (E, W), (N, S), (NE, SW), (SE, NW)
DIRECTIONS = np.array(
    [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)], dtype=int
)
AXIS_DIRECTIONS = slice(0, 4)


def _as_points(x):
    p = np.asarray(x, dtype=float)
    return p.reshape(-1, 2), p.ndim == 1


# ---------------------------------------------------------------------------
# level functions
# ---------------------------------------------------------------------------

class LevelSet:
    """Level function F with F < 0 inside.

    Subclasses override ``value`` and, when available in closed form,
    ``gradient`` and ``hessian``.  The fallbacks use central differences
    with step ``fd_step``.
    """

    center = (0.0, 0.0)
    fd_step = 1e-5

    def value(self, p):
        raise NotImplementedError

    def gradient(self, p):
        s = self.fd_step
        g = np.empty_like(p)
        for k in range(2):
            e = np.zeros(2)
            e[k] = s
            g[:, k] = (self.value(p + e) - self.value(p - e)) / (2 * s)
        return g

    def hessian(self, p):
        s = self.fd_step
        H = np.empty((len(p), 2, 2))
        f0 = self.value(p)
        ex, ey = np.array([s, 0.0]), np.array([0.0, s])
        H[:, 0, 0] = (self.value(p + ex) - 2 * f0 + self.value(p - ex)) / s**2
        H[:, 1, 1] = (self.value(p + ey) - 2 * f0 + self.value(p - ey)) / s**2
        H[:, 0, 1] = H[:, 1, 0] = (
            self.value(p + ex + ey) - self.value(p + ex - ey)
            - self.value(p - ex + ey) + self.value(p - ex - ey)
        ) / (4 * s**2)
        return H


class DiskLevel(LevelSet):
    def __init__(self, center, radius):
        self.center = tuple(map(float, center))
        self.radius = float(radius)

    def value(self, p):
        q = p - self.center
        return np.einsum("ij,ij->i", q, q) - self.radius**2

    def gradient(self, p):
        return 2.0 * (p - self.center)

    def hessian(self, p):
        return np.broadcast_to(2.0 * np.eye(2), (len(p), 2, 2)).copy()


class EllipseLevel(LevelSet):
    def __init__(self, center, a, b):
        self.center = tuple(map(float, center))
        self.a, self.b = float(a), float(b)
        self._w = np.array([1 / self.a**2, 1 / self.b**2])

    def value(self, p):
        q = p - self.center
        return q**2 @ self._w - 1.0

    def gradient(self, p):
        return 2.0 * (p - self.center) * self._w

    def hessian(self, p):
        return np.broadcast_to(2.0 * np.diag(self._w), (len(p), 2, 2)).copy()


class SuperellipseLevel(LevelSet):
    """|X|^p + |Y|^p - 1 with X = (x - cx)/w; a smoothed square for large p."""

    def __init__(self, center, half_width, exponent):
        if exponent < 2:
            raise GeometryError("superellipse exponent must be >= 2 for a C^2 boundary")
        self.center = tuple(map(float, center))
        self.w = float(half_width)
        self.p = float(exponent)

    def value(self, p):
        q = np.abs((p - self.center) / self.w)
        return np.sum(q**self.p, axis=1) - 1.0

    def gradient(self, p):
        q = (p - self.center) / self.w
        return self.p * np.abs(q) ** (self.p - 1) * np.sign(q) / self.w

    def hessian(self, p):
        q = np.abs((p - self.center) / self.w)
        H = np.zeros((len(p), 2, 2))
        d = self.p * (self.p - 1) * q ** (self.p - 2) / self.w**2
        H[:, 0, 0], H[:, 1, 1] = d[:, 0], d[:, 1]
        return H


class CassiniLevel(LevelSet):
    """Cassini oval (r^2)^2 - 2c^2(x^2 - y^2) - (a^4 - c^4).

    For c < a < sqrt(2) c the oval is a peanut with two concave arcs, which
    makes it a convenient non mean convex domain.
    """

    def __init__(self, center, a, c):
        self.center = tuple(map(float, center))
        self.a, self.c = float(a), float(c)

    def value(self, p):
        x, y = (p - self.center).T
        r2 = x * x + y * y
        return r2 * r2 - 2 * self.c**2 * (x * x - y * y) - (self.a**4 - self.c**4)

    def gradient(self, p):
        x, y = (p - self.center).T
        r2 = x * x + y * y
        c2 = self.c**2
        return np.column_stack([4 * x * r2 - 4 * c2 * x, 4 * y * r2 + 4 * c2 * y])

    def hessian(self, p):
        x, y = (p - self.center).T
        r2 = x * x + y * y
        c2 = self.c**2
        H = np.empty((len(p), 2, 2))
        H[:, 0, 0] = 4 * r2 + 8 * x * x - 4 * c2
        H[:, 1, 1] = 4 * r2 + 8 * y * y + 4 * c2
        H[:, 0, 1] = H[:, 1, 0] = 8 * x * y
        return H


class ExpressionLevel(LevelSet):
    """User-supplied F(x, y); derivatives by central differences."""

    def __init__(self, source, center, fd_step):
        self.source = source
        self._f = parse_expression(source)
        self.center = tuple(map(float, center))
        self.fd_step = float(fd_step)

    def value(self, p):
        return self._f(p[:, 0], p[:, 1])


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Bounded planar domain {F < 0} with boundary data phi.

    Parameters
    ----------
    level : LevelSet
        Level function; must be star shaped about ``level.center`` for the
        boundary sampler.
    phi : callable
        ``phi(x, y)`` on arrays, positive near the boundary.
    bbox : ((xmin, ymin), (xmax, ymax))
        Box strictly containing the closure of the domain.
    source : dict
        The JSON document the domain came from (kept for serialization).
    """

    level: LevelSet
    phi: Callable
    bbox: tuple
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = np.asarray(self.bbox, dtype=float)
        if not np.all(hi > lo):
            raise GeometryError(f"degenerate bounding box {self.bbox}")
        if self.level.value(np.atleast_2d(self.level.center))[0] >= 0:
            raise GeometryError("level-set center must lie inside the domain")
        pts = self.boundary_samples
        edge = np.concatenate([
            np.column_stack([np.linspace(lo[0], hi[0], 64), np.full(64, y)]) for y in (lo[1], hi[1])
        ] + [
            np.column_stack([np.full(64, x), np.linspace(lo[1], hi[1], 64)]) for x in (lo[0], hi[0])
        ])
        if np.any(self.level.value(edge) <= 0):
            raise GeometryError("domain is not contained in its bounding box")
        g = np.linalg.norm(self.level.gradient(pts), axis=1)
        if np.any(g <= 1e-12 * max(1.0, float(np.max(g)))):
            raise GeometryError("level function has vanishing gradient on the boundary")
        if np.any(self.boundary_phi(pts) <= 0):
            raise GeometryError("boundary data must be positive")

    # -- cached sampling ---------------------------------------------------

    @cached_property
    def boundary_samples(self):
        """Dense closed polyline on the boundary, ordered by polar angle."""
        n = K.BOUNDARY_SAMPLES
        c = np.asarray(self.level.center)
        lo, hi = np.asarray(self.bbox, dtype=float)
        ang = 2 * np.pi * np.arange(n) / n
        d = np.column_stack([np.cos(ang), np.sin(ang)])
        # distance along each ray to the box edge
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(d[:, 0] > 0, (hi[0] - c[0]) / d[:, 0], (lo[0] - c[0]) / d[:, 0])
            ty = np.where(d[:, 1] > 0, (hi[1] - c[1]) / d[:, 1], (lo[1] - c[1]) / d[:, 1])
        tmax = np.minimum(np.where(np.isfinite(tx), tx, np.inf), np.where(np.isfinite(ty), ty, np.inf))
        m = 512
        s = np.linspace(0.0, 1.0, m + 1)
        pts = c + (s[None, :, None] * tmax[:, None, None]) * d[:, None, :]
        F = self.level.value(pts.reshape(-1, 2)).reshape(n, m + 1)
        first_out = np.argmax(F >= 0, axis=1)
        if np.any(first_out == 0):
            raise GeometryError("ray sampler found no boundary crossing")
        lo_s = s[first_out - 1] * tmax
        hi_s = s[first_out] * tmax
        for _ in range(64):
            mid = 0.5 * (lo_s + hi_s)
            inside = self.level.value(c + mid[:, None] * d) < 0
            lo_s = np.where(inside, mid, lo_s)
            hi_s = np.where(inside, hi_s, mid)
        pts = c + (0.5 * (lo_s + hi_s))[:, None] * d
        pts.setflags(write=False)
        return pts

    @cached_property
    def _tree(self):
        return cKDTree(self.boundary_samples)

    @cached_property
    def sample_spacing(self):
        p = self.boundary_samples
        return float(np.max(np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)))

    @cached_property
    def diameter(self):
        p = self.boundary_samples
        return float(np.max(pdist(p[ConvexHull(p).vertices])))

    @cached_property
    def arclength(self):
        p = self.boundary_samples
        seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    # -- boundary data -----------------------------------------------------

    def boundary_phi(self, p):
        """phi evaluated at points assumed to lie on the boundary."""
        p, single = _as_points(p)
        v = np.asarray(self.phi(p[:, 0], p[:, 1]), dtype=float) * np.ones(len(p))
        return v[0] if single else v

    def extended_phi(self, x):
        """phi(pi(x)): boundary data extended constant along normals."""
        x, single = _as_points(x)
        v = self.boundary_phi(project_boundary(self, x))
        v = np.atleast_1d(v)
        return v[0] if single else v

    @cached_property
    def phi_min(self):
        return float(np.min(self.boundary_phi(self.boundary_samples)))

    @cached_property
    def phi_max(self):
        return float(np.max(self.boundary_phi(self.boundary_samples)))

    def inside(self, x):
        x, single = _as_points(x)
        v = self.level.value(x) < 0
        return bool(v[0]) if single else v


# ---------------------------------------------------------------------------
# closest-point queries
# ---------------------------------------------------------------------------

def _project(domain, x):
    """Closest boundary points by Newton on the Lagrange system.

    Seeds come from the dense boundary polyline; the iteration solves
    p - x = lam * grad F(p), F(p) = 0.
    """
    lvl = domain.level
    tol = K.PROJECTION_TOL * domain.diameter
    seed_d, idx = domain._tree.query(x)
    p = np.array(domain.boundary_samples[idx], dtype=float)
    g = lvl.gradient(p)
    lam = np.einsum("ij,ij->i", p - x, g) / np.einsum("ij,ij->i", g, g)
    todo = np.ones(len(x), dtype=bool)
    for _ in range(K.PROJECTION_MAX_ITER):
        if not np.any(todo):
            break
        pa, xa, la = p[todo], x[todo], lam[todo]
        g = lvl.gradient(pa)
        H = lvl.hessian(pa)
        F = lvl.value(pa)
        r1 = pa - xa - la[:, None] * g
        J = np.zeros((len(pa), 3, 3))
        J[:, :2, :2] = np.eye(2) - la[:, None, None] * H
        J[:, :2, 2] = -g
        J[:, 2, :2] = g
        rhs = -np.column_stack([r1, F])
        det = np.linalg.det(J)
        scale = np.einsum("ij,ij->i", g, g) * (1.0 + np.abs(la) * np.abs(H).max(axis=(1, 2)))
        good = np.abs(det) > 1e-10 * scale
        step = np.zeros((len(pa), 3))
        if np.any(good):
            step[good] = np.linalg.solve(J[good], rhs[good][..., None])[..., 0]
        if not np.all(good):
            # focal points: slide along the tangent, then drop back onto F = 0
            b = ~good
            gb = g[b]
            gg = np.einsum("ij,ij->i", gb, gb)
            tau = np.column_stack([-gb[:, 1], gb[:, 0]]) / np.sqrt(gg)[:, None]
            slide = np.einsum("ij,ij->i", xa[b] - pa[b], tau)[:, None] * tau
            q = pa[b] + slide
            gq = lvl.gradient(q)
            q = q - (lvl.value(q) / np.einsum("ij,ij->i", gq, gq))[:, None] * gq
            step[b, :2] = q - pa[b]
            step[b, 2] = np.einsum("ij,ij->i", q - xa[b], gq) / np.einsum("ij,ij->i", gq, gq) - la[b]
        pa = pa + step[:, :2]
        la = la + step[:, 2]
        p[todo], lam[todo] = pa, la
        done = np.linalg.norm(step[:, :2], axis=1) <= tol
        idx_todo = np.flatnonzero(todo)
        todo[idx_todo[done]] = False
    if np.any(todo):
        raise GeometryError(
            f"boundary projection did not converge for {int(todo.sum())} point(s) "
            f"after {K.PROJECTION_MAX_ITER} iterations"
        )
    dist = np.linalg.norm(x - p, axis=1)
    slack = domain.sample_spacing + tol
    if np.any(dist > seed_d + slack):
        raise GeometryError("projection converged to a non-minimal boundary point")
    return p, dist


def project_boundary(domain, x):
    """Orthogonal projection onto the boundary, pi(x)."""
    x, single = _as_points(x)
    p, _ = _project(domain, x)
    return p[0] if single else p


def signed_distance(domain, x):
    """Distance to the boundary, positive inside and negative outside."""
    x, single = _as_points(x)
    _, dist = _project(domain, x)
    d = np.where(domain.level.value(x) < 0, dist, -dist) + 0.0
    return float(d[0]) if single else d


def project_with_distance(domain, x):
    """(pi(x), signed distance) in one pass; array inputs only."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    p, dist = _project(domain, x)
    return p, np.where(domain.level.value(x) < 0, dist, -dist)


def boundary_mean_curvature(domain, p):
    """Curvature div(grad F / |grad F|) of the level curve through ``p``.

    With F < 0 inside this is positive on convex arcs (inner-normal
    convention); the unit circle gives +1.
    """
    p, single = _as_points(p)
    g = domain.level.gradient(p)
    H = domain.level.hessian(p)
    gn = np.linalg.norm(g, axis=1)
    if np.any(gn <= 1e-14):
        raise GeometryError("vanishing level-set gradient at curvature query")
    lap = H[:, 0, 0] + H[:, 1, 1]
    gHg = np.einsum("ni,nij,nj->n", g, H, g)
    k = (gn**2 * lap - gHg) / gn**3
    return float(k[0]) if single else k


def arclength_samples(domain, m):
    """m boundary points approximately equispaced in arclength."""
    pts = domain.boundary_samples
    closed = np.vstack([pts, pts[:1]])
    L = domain.arclength
    s = np.linspace(0.0, L[-1], m, endpoint=False)
    approx = np.column_stack([np.interp(s, L, closed[:, 0]), np.interp(s, L, closed[:, 1])])
    return project_boundary(domain, approx)


def check_mean_convex(domain, m=256):
    """Sample the boundary curvature; return (all >= -tol, minimum)."""
    if m < 16:
        raise ValueError("need at least 16 samples")
    k = boundary_mean_curvature(domain, arclength_samples(domain, m))
    kmin = float(np.min(k))
    return kmin >= -K.CURVATURE_NONNEG_TOL, kmin


def _circle_two(a, b):
    c = 0.5 * (a + b)
    return c, float(np.linalg.norm(a - c))


def _circle_three(a, b, c):
    ax, ay = a
    bx, by = b
    cx, cy = c
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-300:
        # collinear: the widest pair spans the circle
        pairs = [(a, b), (a, c), (b, c)]
        return max((_circle_two(*q) for q in pairs), key=lambda t: t[1])
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    center = np.array([ux, uy])
    return center, float(np.linalg.norm(a - center))


def minimal_enclosing_circle(points, seed=0):
    """Welzl's incremental algorithm (iterative form) on a point cloud."""
    pts = np.asarray(points, dtype=float)
    pts = pts[np.random.default_rng(seed).permutation(len(pts))]
    eps = 1e-12

    def outside(p, c, r):
        return np.linalg.norm(p - c) > r * (1 + eps) + eps

    c, r = pts[0].copy(), 0.0
    for i in range(1, len(pts)):
        if not outside(pts[i], c, r):
            continue
        c, r = pts[i].copy(), 0.0
        for j in range(i):
            if not outside(pts[j], c, r):
                continue
            c, r = _circle_two(pts[i], pts[j])
            for k in range(j):
                if outside(pts[k], c, r):
                    c, r = _circle_three(pts[i], pts[j], pts[k])
    return c, r


def circumscribed_ball(domain, inflate=None):
    """A ball containing the closed domain.

    Minimal enclosing circle of the dense boundary polyline, inflated by
    ``inflate`` (default: the polyline's largest chord) to cover the arcs
    between samples.
    """
    pts = domain.boundary_samples
    hull = pts[ConvexHull(pts).vertices]
    c, r = minimal_enclosing_circle(hull)
    pad = domain.sample_spacing if inflate is None else float(inflate)
    return c, r + pad


def max_interior_distance(domain, n=96):
    """Largest distance to the boundary over a sampling of the domain."""
    lo, hi = np.asarray(domain.bbox, dtype=float)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    X = np.array(np.meshgrid(xs, ys, indexing="ij")).reshape(2, -1).T
    inside = domain.level.value(X) < 0
    # nearest sample distance is an upper bound accurate to the sample spacing
    d, _ = domain._tree.query(X[inside])
    best = X[inside][np.argmax(d)]
    return float(signed_distance(domain, best))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

class Grid:
    """Cartesian grid with Shortley-Weller cut data for an implicit domain.

    Nodes are ``origin + (i*h, j*h)``.  Unknowns live on INTERIOR and
    BOUNDARY_ADJACENT ("active") nodes.  For every active node and each of
    the eight directions in ``DIRECTIONS`` the grid records either the index
    of the active neighbour or a cut: the fraction ``theta`` of the full arm
    at which the boundary is met, the cut point and the boundary value there.
    Diagonal arms feed the cross-derivative stencil.

    Attributes are read-only numpy arrays; treat instances as immutable.
    """

    def __init__(self, domain, h, origin, nx, ny, kind, index, xy, nbr, theta, cut_points,
                 bvals, snapped_xy, snapped_values):
        self.domain = domain
        self.h = float(h)
        self.origin = np.asarray(origin, dtype=float)
        self.nx, self.ny = int(nx), int(ny)
        self.classification = kind
        self.index = index
        self.xy = xy
        self.neighbors = nbr
        self.theta = theta
        self.cut_points = cut_points
        self.boundary_values = bvals
        self.snapped_xy = snapped_xy
        self.snapped_values = snapped_values
        ii, jj = np.nonzero(index >= 0)
        order = np.argsort(index[ii, jj])
        self.ij = np.column_stack([ii[order], jj[order]])
        for a in (kind, index, xy, nbr, theta, cut_points, bvals, self.ij):
            a.setflags(write=False)
        self._cache = {}

    @property
    def n_active(self):
        return len(self.xy)

    @property
    def node_kind(self):
        """Classification of each active node, in unknown order."""
        return self.classification[self.ij[:, 0], self.ij[:, 1]]

    @property
    def interior_mask(self):
        return self.node_kind == INTERIOR

    @property
    def ring_mask(self):
        return self.node_kind == BOUNDARY_ADJACENT

    def count(self, which):
        return int(np.sum(self.classification == which))

    def cut_fractions(self, i, j):
        """Axis cut fractions (E, W, N, S) at node (i, j)."""
        k = self.index[i, j]
        if k < 0:
            return None
        return tuple(float(t) for t in self.theta[k, AXIS_DIRECTIONS])

    def node_xy(self, i, j):
        return self.origin + self.h * np.array([i, j], dtype=float)


def _bisect_cuts(level, start, step):
    """Zero of F on start + s*step, s in (0, 1], with F(start) < 0 <= F(start + step)."""
    lo = np.zeros(len(start))
    hi = np.ones(len(start))
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        inside = level.value(start + mid[:, None] * step) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    f_lo = np.abs(level.value(start + lo[:, None] * step))
    f_hi = np.abs(level.value(start + hi[:, None] * step))
    s = np.where(f_hi <= f_lo, hi, lo)
    s = np.where(s <= 0.0, hi, s)
    return s


def build_grid(domain, h):
    """Classify lattice nodes and compute Shortley-Weller cut data.

    The lattice consists of integer multiples of ``h``.  Nodes whose
    distance to the boundary along any of the eight stencil arms is below
    ``THETA_MIN * h`` are snapped onto the boundary: they become Dirichlet
    nodes carrying ``phi(pi(x))``.
    """
    h = float(h)
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    lo, hi = np.asarray(domain.bbox, dtype=float)
    i0 = math.floor(lo[0] / h) - 1
    j0 = math.floor(lo[1] / h) - 1
    nx = math.ceil(hi[0] / h) + 2 - i0
    ny = math.ceil(hi[1] / h) + 2 - j0
    origin = np.array([i0 * h, j0 * h])
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    # integer-times-h coordinates keep lattice points exact multiples of h
    X = np.column_stack([(I.ravel() + i0) * h, (J.ravel() + j0) * h])
    F = domain.level.value(X).reshape(nx, ny)
    inside = F < 0
    inside[0, :] = inside[-1, :] = inside[:, 0] = inside[:, -1] = False

    ii, jj = np.nonzero(inside)
    P = np.column_stack([(ii + i0) * h, (jj + j0) * h])
    nd = len(DIRECTIONS)
    theta = np.ones((len(ii), nd))
    cutp = np.full((len(ii), nd, 2), np.nan)
    for d, (di, dj) in enumerate(DIRECTIONS):
        out = ~inside[ii + di, jj + dj]
        if not np.any(out):
            continue
        step = h * np.array([di, dj], dtype=float)
        on_node = F[ii[out] + di, jj[out] + dj] == 0.0
        s = _bisect_cuts(domain.level, P[out], np.broadcast_to(step, (int(out.sum()), 2)))
        s = np.where(on_node, 1.0, s)
        theta[out, d] = s
        cutp[out, d] = P[out] + s[:, None] * step
    is_cut = ~np.isnan(cutp[:, :, 0])
    snapped = np.any(is_cut & (theta < K.THETA_MIN), axis=1)
    active = np.zeros_like(inside)
    active[ii[~snapped], jj[~snapped]] = True
    if not np.any(active):
        raise ResolutionError(f"grid spacing h={h} leaves no interior unknowns")

    index = -np.ones((nx, ny), dtype=np.int64)
    ai, aj = ii[~snapped], jj[~snapped]
    index[ai, aj] = np.arange(len(ai))
    xy = P[~snapped].copy()
    theta = theta[~snapped]
    cutp = cutp[~snapped]
    snap_mask = np.zeros_like(inside)
    snap_mask[ii[snapped], jj[snapped]] = True
    snapped_xy = P[snapped].copy()
    snapped_values = domain.extended_phi(snapped_xy) if len(snapped_xy) else np.zeros(0)
    snapped_values = np.atleast_1d(snapped_values)
    snap_lookup = {(int(a), int(b)): v for a, b, v in zip(ii[snapped], jj[snapped], snapped_values)}

    nbr = -np.ones((len(ai), nd), dtype=np.int64)
    bvals = np.full((len(ai), nd), np.nan)
    for d, (di, dj) in enumerate(DIRECTIONS):
        ni, nj = ai + di, aj + dj
        nb = index[ni, nj]
        nbr[:, d] = nb
        to_snap = snap_mask[ni, nj]
        if np.any(to_snap):
            rows = np.flatnonzero(to_snap)
            theta[rows, d] = 1.0
            cutp[rows, d] = xy[rows] + h * np.array([di, dj], dtype=float)
            bvals[rows, d] = [snap_lookup[(int(a), int(b))] for a, b in zip(ni[rows], nj[rows])]
        cut_rows = np.flatnonzero((nb < 0) & ~to_snap)
        if len(cut_rows):
            bvals[cut_rows, d] = domain.boundary_phi(cutp[cut_rows, d])
    kind = np.full((nx, ny), EXTERIOR, dtype=np.int8)
    full_axis = np.all(nbr[:, AXIS_DIRECTIONS] >= 0, axis=1)
    kind[ai, aj] = np.where(full_axis, INTERIOR, BOUNDARY_ADJACENT)
    return Grid(domain, h, origin, nx, ny, kind, index, xy, nbr, theta, cutp, bvals,
                snapped_xy, snapped_values)


# ---------------------------------------------------------------------------
# construction helpers and JSON ingestion
# ---------------------------------------------------------------------------

def _phi_from_json(spec):
    if spec is None:
        raise GeometryError("domain JSON needs a 'phi' entry")
    kind = spec.get("kind")
    if kind == "constant":
        value = float(spec["value"])
        return lambda x, y: np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, value)
    if kind == "expression":
        return parse_expression(spec["expr"])
    raise GeometryError(f"unknown phi kind {kind!r}")


def _pad_box(lo, hi, frac=0.05):
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    pad = frac * np.max(hi - lo)
    return (tuple(lo - pad), tuple(hi + pad))


def domain_from_dict(doc):
    """Build a DomainSpec from the JSON document layout.

    ``{"shape": "disk", "center": [0, 0], "radius": 0.5,
    "phi": {"kind": "constant", "value": 1.0}}``; other shapes are
    ``ellipse`` (``a``, ``b``), ``superellipse`` (``half_width``,
    ``exponent``), ``cassini`` (``a``, ``c``) and ``expression``
    (``level``, ``bbox``, ``center``).
    """
    if not isinstance(doc, dict) or "shape" not in doc:
        raise GeometryError("domain JSON must be an object with a 'shape' key")
    shape = doc["shape"]
    center = np.asarray(doc.get("center", (0.0, 0.0)), dtype=float)
    phi = _phi_from_json(doc.get("phi"))
    try:
        if shape == "disk":
            r = float(doc["radius"])
            level = DiskLevel(center, r)
            bbox = _pad_box(center - r, center + r)
        elif shape == "ellipse":
            a, b = float(doc["a"]), float(doc["b"])
            level = EllipseLevel(center, a, b)
            bbox = _pad_box(center - (a, b), center + (a, b))
        elif shape == "superellipse":
            w = float(doc.get("half_width", 1.0))
            level = SuperellipseLevel(center, w, float(doc.get("exponent", 10.0)))
            bbox = _pad_box(center - w, center + w)
        elif shape == "cassini":
            a, c = float(doc["a"]), float(doc["c"])
            level = CassiniLevel(center, a, c)
            rx = math.sqrt(a * a + c * c)
            bbox = _pad_box(center - rx, center + rx)
        elif shape == "expression":
            bbox = tuple(map(tuple, doc["bbox"]))
            diag = float(np.linalg.norm(np.subtract(bbox[1], bbox[0])))
            level = ExpressionLevel(doc["level"], center, K.FD_STEP_REL * diag)
            probe = DomainSpec(level, phi, bbox, dict(doc))
            level = ExpressionLevel(doc["level"], center, K.FD_STEP_REL * probe.diameter)
        else:
            raise GeometryError(f"unknown shape {shape!r}")
    except KeyError as exc:
        raise GeometryError(f"shape {shape!r} is missing parameter {exc.args[0]!r}") from None
    return DomainSpec(level, phi, bbox, dict(doc))


def disk(radius=1.0, center=(0.0, 0.0), phi=1.0):
    return domain_from_dict({"shape": "disk", "radius": radius, "center": list(center),
                             "phi": _phi_doc(phi)})


def ellipse(a, b, center=(0.0, 0.0), phi=1.0):
    return domain_from_dict({"shape": "ellipse", "a": a, "b": b, "center": list(center),
                             "phi": _phi_doc(phi)})


def superellipse(half_width=1.0, exponent=10.0, center=(0.0, 0.0), phi=1.0):
    return domain_from_dict({"shape": "superellipse", "half_width": half_width,
                             "exponent": exponent, "center": list(center), "phi": _phi_doc(phi)})


def cassini(a=1.2, c=1.0, center=(0.0, 0.0), phi=1.0):
    return domain_from_dict({"shape": "cassini", "a": a, "c": c, "center": list(center),
                             "phi": _phi_doc(phi)})


def _phi_doc(phi):
    if isinstance(phi, dict):
        return phi
    if isinstance(phi, str):
        return {"kind": "expression", "expr": phi}
    return {"kind": "constant", "value": float(phi)}


def scaled_domain_dict(doc, lam):
    """JSON document of the homothetic image lam * domain with phi -> lam * phi(x / lam)."""
    lam = float(lam)
    out = dict(doc)
    out["center"] = [lam * float(c) for c in doc.get("center", (0.0, 0.0))]
    for key in ("radius", "a", "b", "half_width"):
        if key in doc and not (doc["shape"] == "cassini"):
            out[key] = lam * float(doc[key])
    if doc["shape"] == "cassini":
        out["a"], out["c"] = lam * float(doc["a"]), lam * float(doc["c"])
    if doc["shape"] == "expression":
        raise GeometryError("homothety of expression domains is not supported")
    phi = doc["phi"]
    if phi["kind"] == "constant":
        out["phi"] = {"kind": "constant", "value": lam * float(phi["value"])}
    else:
        inv = repr(1.0 / lam)
        expr = phi["expr"]
        expr = re.sub(r"\bx\b", f"(x*{inv})", expr)
        expr = re.sub(r"\by\b", f"(y*{inv})", expr)
        out["phi"] = {"kind": "expression", "expr": f"{lam!r}*({expr})"}
    return out
