"""Finite-difference derivatives on smoothly mapped grids.

This is the evaluation path used to *check* solutions, kept separate from the
finite-volume assembly in :mod:`scalarflat.elliptic`.  Radial derivatives are
taken in index space (where a geometric grid is uniform) and mapped back with
the chain rule; polar-angle derivatives use an even reflection across the
axis, so every angular stencil is centred.

Stencil weights are exact rationals and sums are accumulated in extended
precision: second differences on fine grids otherwise lose more to
cancellation than the truncation error being measured.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.sparse as sp


def _exact_weights(offsets, deriv: int) -> list[Fraction]:
    """Solve the Vandermonde moment system exactly over the rationals."""
    m = len(offsets)
    A = [[Fraction(int(o)) ** i / factorial(i) for o in offsets] + [Fraction(int(i == deriv))]
         for i in range(m)]
    for c in range(m):
        p = next(i for i in range(c, m) if A[i][c] != 0)
        A[c], A[p] = A[p], A[c]
        piv = A[c][c]
        A[c] = [x / piv for x in A[c]]
        for i in range(m):
            if i != c and A[i][c] != 0:
                fac = A[i][c]
                A[i] = [x - fac * y for x, y in zip(A[i], A[c])]
    return [row[-1] for row in A]


def fd_weights(offsets, deriv: int, dtype=float) -> np.ndarray:
    """Weights of the ``deriv``-th derivative at 0 from integer ``offsets``."""
    exact = _exact_weights([int(o) for o in offsets], deriv)
    return np.array([np.longdouble(w.numerator) / np.longdouble(w.denominator) for w in exact],
                    dtype=dtype)


@lru_cache(maxsize=64)
def index_diff_matrix(m: int, deriv: int, order: int) -> sp.csr_matrix:
    """Differentiation in index space: centred where possible, one-sided at the ends."""
    central = order + 1
    onesided = deriv + order
    half = central // 2
    if m < onesided:
        raise ValueError(f"need at least {onesided} nodes for order {order}")
    rows, cols, vals = [], [], []
    cache = {}
    for k in range(m):
        if half <= k < m - half:
            start, size = k - half, central
        else:
            size = onesided
            start = 0 if k < half else m - size
        key = (start - k, size)
        if key not in cache:
            cache[key] = fd_weights(np.arange(start - k, start - k + size), deriv, np.longdouble)
        w = cache[key]
        rows.extend([k] * size)
        cols.extend(range(start, start + size))
        vals.extend(w)
    return sp.csr_matrix((np.array(vals, dtype=np.longdouble), (rows, cols)), shape=(m, m))


def radial_derivatives(r: np.ndarray, U: np.ndarray, order: int = 4):
    """``(u_r, u_rr)`` along axis 0 of ``U`` for the smoothly mapped nodes ``r``."""
    m = r.size
    D1 = index_diff_matrix(m, 1, order)
    D2 = index_diff_matrix(m, 2, order)
    r = np.asarray(r, dtype=np.longdouble)
    r_x, r_xx = D1 @ r, D2 @ r
    U = np.asarray(U)
    flat = U.reshape(m, -1).astype(np.longdouble)
    u_x, u_xx = D1 @ flat, D2 @ flat
    u_r = u_x / r_x[:, None]
    u_rr = (u_xx - r_xx[:, None] * u_r) / (r_x**2)[:, None]
    return u_r.reshape(U.shape), u_rr.reshape(U.shape)


def _reflect_derivs(theta: np.ndarray, U: np.ndarray, order: int):
    half = order // 2
    dth = np.longdouble(theta[1] - theta[0])
    padded = np.pad(np.asarray(U, dtype=np.longdouble), ((0, 0), (half, half)), mode="reflect")
    w1 = fd_weights(np.arange(-half, half + 1), 1, np.longdouble) / dth
    w2 = fd_weights(np.arange(-half, half + 1), 2, np.longdouble) / dth**2
    m = U.shape[1]
    u_t = sum(w * padded[:, i:i + m] for i, w in enumerate(w1))
    u_tt = sum(w * padded[:, i:i + m] for i, w in enumerate(w2))
    return u_t, u_tt


def flat_laplacian(grid, U: np.ndarray, order: int = 4) -> np.ndarray:
    """Flat Laplacian of ``U`` (shape ``grid.shape``) at every node.

    Values at the ends of the radial range use one-sided stencils; callers
    normally keep only interior nodes.
    """
    n = grid.n
    r = grid.r
    U = np.asarray(U, dtype=float).reshape(grid.shape)
    u_r, u_rr = radial_derivatives(r, U, order)
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = u_rr + (n - 1) * u_r / r[:, None]
    centre = r == 0.0
    lap[centre] = n * u_rr[centre]
    if grid.theta is not None:
        th = grid.theta
        u_t, u_tt = _reflect_derivs(th, U, order)
        with np.errstate(divide="ignore", invalid="ignore"):
            ang = u_tt + np.cos(th) / np.sin(th) * u_t
        poles = np.isclose(np.sin(th), 0.0, atol=1e-14)
        ang[:, poles] = 2.0 * u_tt[:, poles]
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = lap + ang / (r**2)[:, None]
    return lap


def boundary_normal_derivative(grid, U: np.ndarray, order: int = 4) -> np.ndarray:
    """Outward normal derivative on dM, one value per boundary node."""
    U = np.asarray(U, dtype=float).reshape(grid.shape)
    r = grid.r
    m = r.size
    order = min(order, m - 1)
    D1 = index_diff_matrix(m, 1, order)
    k = grid.boundary_k
    row = D1.getrow(k)
    r_x = (row @ r).item()
    u_x = row @ U
    sign = 1.0 if grid.boundary_at == "outer" else -1.0
    return sign * np.asarray(u_x).reshape(-1) / r_x
