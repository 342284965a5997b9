"""Finite-difference residual and exact Jacobian of the nondivergence operator

    Q_t[u] = (1 + |Du|^2) Lap u - u_i u_j u_ij - alpha*t*(1 + |Du|^2)/u

on a cut-cell grid.

Every derivative is a linear map ``D u + g`` where ``g`` collects the
Dirichlet data at cut points.  First and pure second derivatives use the
three-point unequal-arm (Shortley-Weller) formulas along the axes; u_xy is
half the difference of the second derivatives along the two diagonals,
which reduces to the usual four-corner formula away from the boundary.
Because the stencils are linear in u, the chain rule gives the Jacobian
exactly: the coefficients a_ij, B_i and c of the linearized operator are
evaluated nodewise and multiplied into the derivative matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError

# (plus, minus) direction indices into geometry.DIRECTIONS
_X, _Y, _D1, _D2 = (0, 1), (2, 3), (4, 5), (6, 7)


@dataclass
class ScalarField:
    """Nodal values on the active nodes of ``grid`` (in unknown order)."""

    grid: object
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_active,):
            raise ValueError(
                f"field has shape {self.values.shape}, grid has {self.grid.n_active} unknowns"
            )

    def copy(self, values=None):
        return ScalarField(self.grid, self.values.copy() if values is None else values)


@dataclass(frozen=True)
class LinearOperator:
    """Assembled linearization with its nodal coefficients."""

    matrix: sp.csr_matrix
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    c: np.ndarray

    def __matmul__(self, v):
        return self.matrix @ v

    @property
    def shape(self):
        return self.matrix.shape


class Stencils:
    """Derivative matrices for one grid: ``D @ u + g`` for each derivative."""

    def __init__(self, grid):
        n = grid.n_active
        h = grid.h
        self.n = n
        self.dx, self.gx = self._line(grid, _X, h, first=True)
        self.dy, self.gy = self._line(grid, _Y, h, first=True)
        self.dxx, self.gxx = self._line(grid, _X, h, first=False)
        self.dyy, self.gyy = self._line(grid, _Y, h, first=False)
        d1, g1 = self._line(grid, _D1, h * math.sqrt(2.0), first=False)
        d2, g2 = self._line(grid, _D2, h * math.sqrt(2.0), first=False)
        self.dxy = (0.5 * (d1 - d2)).tocsr()
        self.gxy = 0.5 * (g1 - g2)
        self.lap = (self.dxx + self.dyy).tocsr()
        self.glap = self.gxx + self.gyy

    @staticmethod
    def _line(grid, pair, length, first):
        n = grid.n_active
        ip, im = pair
        hp = grid.theta[:, ip] * length
        hm = grid.theta[:, im] * length
        if first:
            wp = hm / (hp * (hp + hm))
            wm = -hp / (hm * (hp + hm))
            w0 = (hp - hm) / (hp * hm)
        else:
            wp = 2.0 / (hp * (hp + hm))
            wm = 2.0 / (hm * (hp + hm))
            w0 = -2.0 / (hp * hm)
        rows = [np.arange(n)]
        cols = [np.arange(n)]
        vals = [w0]
        g = np.zeros(n)
        for w, d in ((wp, ip), (wm, im)):
            nb = grid.neighbors[:, d]
            inner = nb >= 0
            rows.append(np.flatnonzero(inner))
            cols.append(nb[inner])
            vals.append(w[inner])
            g[~inner] += w[~inner] * grid.boundary_values[~inner, d]
        D = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        return D, g


def stencils(grid):
    """Derivative matrices for ``grid`` (built once, cached on the grid)."""
    st = grid._cache.get("stencils")
    if st is None:
        st = grid._cache["stencils"] = Stencils(grid)
    return st


def _derivatives(field):
    st = stencils(field.grid)
    u = field.values
    return (u, st.dx @ u + st.gx, st.dy @ u + st.gy,
            st.dxx @ u + st.gxx, st.dyy @ u + st.gyy, st.dxy @ u + st.gxy)


def _check_positive(u):
    if not np.all(u > 0):
        bad = int(np.argmin(u))
        raise DomainError(f"field must be positive; u[{bad}] = {u[bad]:.3e}")


def assemble_residual(field, params):
    """Nodal values of Q_t[u] with alpha*t taken from ``params``."""
    u, ux, uy, uxx, uyy, uxy = _derivatives(field)
    _check_positive(u)
    W2 = 1.0 + ux * ux + uy * uy
    return ((1.0 + uy * uy) * uxx + (1.0 + ux * ux) * uyy - 2.0 * ux * uy * uxy
            - params.alpha_t * W2 / u)


def coefficients(field, params):
    """Nodal a_ij(Du), B_i(u, Du, D^2u) and c(u, Du) of the linearization."""
    u, ux, uy, uxx, uyy, uxy = _derivatives(field)
    _check_positive(u)
    at = params.alpha_t
    lap = uxx + uyy
    a11 = 1.0 + uy * uy
    a22 = 1.0 + ux * ux
    a12 = -ux * uy
    b1 = 2.0 * (lap - at / u) * ux - 2.0 * (ux * uxx + uy * uxy)
    b2 = 2.0 * (lap - at / u) * uy - 2.0 * (ux * uxy + uy * uyy)
    c = at * (1.0 + ux * ux + uy * uy) / u**2
    return a11, a12, a22, b1, b2, c


def assemble_jacobian(field, params):
    """Sparse derivative of ``assemble_residual`` at ``field``.

    The returned operator is a11 Dxx + 2 a12 Dxy + a22 Dyy + B1 Dx + B2 Dy + c I.
    """
    st = stencils(field.grid)
    a11, a12, a22, b1, b2, c = coefficients(field, params)
    diag = sp.diags
    M = (diag(a11) @ st.dxx + diag(a22) @ st.dyy + diag(2.0 * a12) @ st.dxy
         + diag(b1) @ st.dx + diag(b2) @ st.dy + diag(c))
    return LinearOperator(M.tocsr(), a11, a12, a22, b1, b2, c)


def discrete_gradient(field):
    """(u_x, u_y) at every active node, shape (N, 2)."""
    st = stencils(field.grid)
    u = field.values
    return np.column_stack([st.dx @ u + st.gx, st.dy @ u + st.gy])


def laplacian(grid):
    """(matrix, boundary vector) of the five-point Shortley-Weller Laplacian."""
    st = stencils(grid)
    return st.lap, st.glap


def min_ellipticity(op, xi):
    """min over nodes of xi^T a xi - |xi|^2 for one unit-free vector xi."""
    x1, x2 = xi
    q = op.a11 * x1 * x1 + 2.0 * op.a12 * x1 * x2 + op.a22 * x2 * x2
    return float(np.min(q - (x1 * x1 + x2 * x2)))
