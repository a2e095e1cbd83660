"""Discrete ``L_lambda``/``B_gamma`` operators, linear solves and diagnostics.

The Laplace-Beltrami operator of ``g = w^{4/(n-2)} delta`` is discretised in
conservative finite-volume form,

    Delta_g u = w^{-2n/(n-2)} r^{1-n} (r^{n-1} w^2 u_r)_r + w^{-4/(n-2)} r^{-2} Delta_S u,

which reproduces constants exactly.  Boundary rows use a second-order
one-sided three-node normal derivative.  Its far-node coefficient has the
wrong sign for an M-matrix, so for solving it is eliminated against the
adjacent interior row; :attr:`LinearSystem.rhs_map` carries the same
elimination for the right-hand side, so ``matrix @ u = rhs_map @ b`` holds
exactly when ``operator @ u = b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import linalg as sla
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .errors import NoConvergence, PositivityRequired, SingularSystem, UnsupportedModel
from .mesh import Field, Grid

RESIDUAL_TOL = 1e-12
REFINEMENT_STEPS = 3


def one_sided_weights(x0: float, x1: float, x2: float) -> tuple[float, float, float]:
    """Three-node second-order first-derivative weights at ``x0``."""
    d1, d2 = x1 - x0, x2 - x0
    return (-(d1 + d2) / (d1 * d2), d2 / (d1 * (d2 - d1)), -d1 / (d2 * (d2 - d1)))


@dataclass(eq=False)
class LinearSystem:
    """Assembled discrete operator.

    ``operator`` holds the natural rows: ``(Delta_g - lam) u`` in the
    interior, ``B_g u + gam u`` on dM and the identity on N.  ``matrix`` is
    the row-scaled version (unit diagonal) with the boundary far node
    eliminated; it is what gets factorised and checked for M-matrix form.
    """

    grid: Grid
    model: object
    operator: sp.csr_matrix
    matrix: sp.csr_matrix
    rhs_map: sp.csr_matrix
    lam: float
    gamma: float
    degree: int = 0
    rhs: np.ndarray | None = None
    symmetric: bool = False
    _factor: object = field(default=None, repr=False)
    _matrix_hi: object = field(default=None, repr=False)

    def natural_rhs(self) -> np.ndarray:
        return np.zeros(self.grid.size) if self.rhs is None else np.asarray(self.rhs, float)

    def apply(self, u) -> np.ndarray:
        values = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
        return self.operator @ values


def _radial_geometry(model, r):
    n = model.n
    mid = 0.5 * (r[1:] + r[:-1])
    h = np.diff(r)
    w_mid = model.w(mid)
    flux = mid ** (n - 1) * w_mid**2 / h  # coefficient a_{k+1/2}
    edges = np.concatenate([[r[0]], mid, [r[-1]]])
    if r[0] == 0.0:
        edges[0] = 0.0
    shell = (edges[1:] ** n - edges[:-1] ** n) / n
    with np.errstate(divide="ignore"):
        w_node = model.w(np.where(r > 0, r, mid[0]))
    vol = w_node ** (2 * n / (n - 2)) * shell
    return flux, vol, w_node


def _angular_geometry(theta):
    dth = theta[1] - theta[0]
    half = 0.5 * (theta[1:] + theta[:-1])
    s_half = np.sin(half)
    cos_edges = np.concatenate([[1.0], np.cos(half), [-1.0]])
    area = cos_edges[:-1] - cos_edges[1:]
    return s_half / dth, area


def _collect(rows, cols, vals, size):
    rows = np.concatenate([np.atleast_1d(x) for x in rows])
    cols = np.concatenate([np.atleast_1d(x) for x in cols])
    vals = np.concatenate([np.atleast_1d(x) for x in vals])
    return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))


def assemble(model, grid: Grid, lam: float = 1.0, gamma: float = 0.0, degree: int = 0,
             dirichlet_boundary: bool = False) -> LinearSystem:
    """Assemble ``L_lam`` (interior), ``B_gam`` (dM) and Dirichlet rows (N).

    ``dirichlet_boundary=True`` replaces the dM rows by the identity, as
    needed for the exhaustion problems of the barrier.
    """
    if grid.n != model.n or grid.boundary_at != model.boundary_at:
        raise UnsupportedModel("grid was not built for this model")
    if lam < 0 or gamma < 0:
        raise ValueError("lam and gamma must be nonnegative")
    if degree and grid.theta is not None:
        raise UnsupportedModel("spherical-harmonic degree applies to radial grids only")
    n = model.n
    r = grid.r
    K1, M = grid.shape
    flux, vol, w_node = _radial_geometry(model, r)
    conf = w_node ** (-4.0 / (n - 2))
    if grid.theta is not None:
        s_flux, area = _angular_geometry(grid.theta)
    else:
        s_flux, area = np.empty(0), np.ones(1)
    kb, kc = grid.boundary_k, grid.cut_k
    centre_dirichlet = degree > 0 and r[0] == 0.0

    op_rows, op_cols, op_vals = [], [], []

    def put(row, col, val):
        op_rows.append(row)
        op_cols.append(col)
        op_vals.append(val)

    j = np.arange(M)
    for k in range(K1):
        idx = k * M + j
        if k == kc or (k == 0 and centre_dirichlet):
            put(idx, idx, np.ones(M))
            continue
        if k == kb:
            continue
        am = flux[k - 1] if k > 0 else 0.0
        ap = flux[k] if k < K1 - 1 else 0.0
        diag = -(am + ap) / vol[k] - lam
        if degree and r[k] > 0:
            diag = diag - degree * (degree + n - 2) * conf[k] / r[k] ** 2
        if k > 0:
            put(idx, idx - M, np.full(M, am / vol[k]))
        if k < K1 - 1:
            put(idx, idx + M, np.full(M, ap / vol[k]))
        if M > 1:
            ang = conf[k] / r[k] ** 2
            up = np.concatenate([s_flux, [0.0]]) / area
            dn = np.concatenate([[0.0], s_flux]) / area
            put(idx[:-1], idx[:-1] + 1, ang * up[:-1])
            put(idx[1:], idx[1:] - 1, ang * dn[1:])
            diag = diag - ang * (up + dn)
        put(idx, idx, np.broadcast_to(diag, (M,)).copy())

    size = K1 * M
    if dirichlet_boundary:
        idx_b = kb * M + j
        put(idx_b, idx_b, np.ones(M))
        operator = _collect(op_rows, op_cols, op_vals, size)
        S = sp.diags(1.0 / operator.diagonal())
        return LinearSystem(grid, model, operator, (S @ operator).tocsr(), S.tocsr(),
                            float(lam), float(gamma), degree)

    # dM rows: c * sign * d/dr + sigma, three radial nodes
    step = 1 if kb == 0 else -1
    k1, k2 = kb + step, kb + 2 * step
    wb = float(model.w(r[kb]))
    c = wb ** (-2.0 / (n - 2)) * model.normal_sign
    d0, d1, d2 = one_sided_weights(r[kb], r[k1], r[k2])
    sigma = 0.5 * (n - 2) * model.boundary_h + gamma
    idx_b = kb * M + j
    put(idx_b, idx_b, np.full(M, c * d0 + sigma))
    put(idx_b, k1 * M + j, np.full(M, c * d1))
    put(idx_b, k2 * M + j, np.full(M, c * d2))

    operator = _collect(op_rows, op_cols, op_vals, size)

    # eliminate the far node from each dM row with the interior row at k1
    idx_1 = k1 * M + j
    P = operator[idx_1, :].tocsr()
    far = np.asarray(operator[idx_1, k2 * M + j]).reshape(-1)
    factor = (c * d2) / far
    elim = operator[idx_b, :] - sp.diags(factor) @ P
    T = sp.identity(size, format="lil")
    T[idx_b, idx_1] = -factor
    E = operator.tolil()
    E[idx_b, :] = elim
    E = E.tocsr()
    E.eliminate_zeros()

    # unit positive diagonal: sign-normalises the interior rows
    S = sp.diags(1.0 / E.diagonal())
    matrix = (S @ E).tocsr()
    rhs_map = (S @ T.tocsr()).tocsr()
    return LinearSystem(grid, model, operator, matrix, rhs_map, float(lam), float(gamma),
                        degree)


def system_from_matrix(A, grid: Grid | None = None) -> LinearSystem:
    """Wrap a bare matrix (e.g. a textbook stencil) for the diagnostics."""
    A = sp.csr_matrix(A)
    I = sp.identity(A.shape[0], format="csr")
    return LinearSystem(grid, None, A, A, I, float("nan"), float("nan"))


def _banded(A: sp.csr_matrix) -> np.ndarray:
    m = A.shape[0]
    ab = np.zeros((3, m))
    ab[0, 1:] = A.diagonal(1)
    ab[1] = A.diagonal(0)
    ab[2, :-1] = A.diagonal(-1)
    return ab


def _is_tridiagonal(A: sp.csr_matrix) -> bool:
    coo = A.tocoo()
    return bool(np.all(np.abs(coo.row - coo.col) <= 1))


def _direct(system, bb):
    A = system.matrix
    if system._factor is None:
        if system.grid is not None and system.grid.theta is None and _is_tridiagonal(A):
            system._factor = ("banded", _banded(A))
        else:
            system._factor = ("lu", spla.splu(A.tocsc()))
    kind, fac = system._factor
    if kind == "banded":
        return sla.solve_banded((1, 1), fac, bb, check_finite=False)
    return fac.solve(bb)


def backward_error(r, anorm, u, b) -> float:
    """Normwise backward error ``|r| / (|A| |u| + |b|)`` in the max norm."""
    denom = anorm * np.abs(u).max(initial=0.0) + np.abs(b).max(initial=0.0)
    return 0.0 if denom == 0.0 else float(np.abs(r).max() / denom)


def solve_linear(system: LinearSystem, rhs=None) -> Field:
    """Solve ``operator @ u = rhs`` (natural right-hand side).

    Tridiagonal systems use a banded LU; others a sparse LU factorisation
    cached on the system.  Both are deterministic direct solves, followed by
    iterative refinement with residuals in extended precision, which keeps
    the solution's rounding noise at the level of a few ulps.
    """
    b = system.natural_rhs() if rhs is None else np.asarray(rhs, dtype=float)
    bb = system.rhs_map @ b
    A = system.matrix
    if system._matrix_hi is None:
        system._matrix_hi = A.astype(np.longdouble)
    A_hi, bb_hi = system._matrix_hi, bb.astype(np.longdouble)
    try:
        u = _direct(system, bb)
        for _ in range(REFINEMENT_STEPS):
            r = (bb_hi - A_hi @ u.astype(np.longdouble)).astype(float)
            du = _direct(system, r)
            u = u + du
            if np.abs(du).max(initial=0.0) <= 4 * np.finfo(float).eps * np.abs(u).max(initial=0.0):
                break
        err = backward_error(bb - A @ u, spla.norm(A, np.inf), u, bb)
    except (sla.LinAlgError, RuntimeError) as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(u)):
        raise SingularSystem("non-finite solution")
    if err > RESIDUAL_TOL:
        raise NoConvergence(f"backward error {err:.2e} > {RESIDUAL_TOL:g}")
    grid = system.grid
    return Field(grid, u) if grid is not None else u


@dataclass(frozen=True)
class MMatrixReport:
    ok: bool
    row: int | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def m_matrix_check(system, rtol: float = 1e-12) -> MMatrixReport:
    """Sign pattern and (irreducible) diagonal dominance of the solve matrix.

    Rows are normalised by the sign of their diagonal first, so both the
    ``Delta - lam`` and the ``lam - Delta`` conventions are accepted.
    """
    A = sp.csr_matrix(system.matrix if hasattr(system, "matrix") else system)
    d = A.diagonal()
    for i in np.flatnonzero(d == 0):
        return MMatrixReport(False, int(i), "zero diagonal")
    N = sp.diags(np.sign(d)) @ A
    N = sp.csr_matrix(N)
    diag = N.diagonal()
    off = N - sp.diags(diag)
    off = sp.csr_matrix(off)
    off.eliminate_zeros()
    coo = off.tocoo()
    # rounding residue of the elimination is not a sign violation
    bad = coo.data > rtol * np.abs(diag[coo.row])
    if np.any(bad):
        i = int(coo.row[bad].min())
        return MMatrixReport(False, i, "positive off-diagonal entry")
    offsum = np.asarray(abs(off).sum(axis=1)).reshape(-1)
    weak = diag >= offsum * (1.0 - rtol)
    if not np.all(weak):
        i = int(np.flatnonzero(~weak)[0])
        return MMatrixReport(False, i, "row not diagonally dominant")
    strict = diag > offsum * (1.0 + rtol)
    ncomp, labels = csgraph.connected_components(abs(off) + abs(off).T, directed=False)
    for comp in range(ncomp):
        members = labels == comp
        if not np.any(strict[members]):
            return MMatrixReport(False, int(np.flatnonzero(members)[0]),
                                 "component without a strictly dominant row")
    return MMatrixReport(True)


@dataclass(frozen=True)
class ComparisonReport:
    trials: int
    violations: int
    max_u: float


def comparison_principle_test(system: LinearSystem, trials: int, seed: int = 0,
                              tol: float = 1e-10) -> ComparisonReport:
    """Random data with ``L u >= 0``, ``B u <= 0``, ``u|_N <= 0``; count ``max u > tol``."""
    rng = np.random.default_rng(seed)
    grid = system.grid
    tags = grid.tags
    sign = np.where(tags == "interior", 1.0, -1.0)
    worst, violations = -np.inf, 0
    for _ in range(trials):
        mag = rng.uniform(0.0, 1.0, grid.size) * (rng.uniform(size=grid.size) < 0.7)
        b = sign * mag * 10.0 ** rng.uniform(-3, 1)
        u = solve_linear(system, b)
        top = u.max()
        worst = max(worst, top)
        violations += int(top > tol)
    return ComparisonReport(trials, violations, float(worst))


def first_eigenvalue(model, grid: Grid, degree: int = 0, tol: float = 1e-8,
                     max_iter: int = 10_000) -> float:
    """Smallest ``mu`` with ``Delta_g u = 0``, ``B_g u = mu u`` on dM.

    Inverse power iteration on the boundary-reduced (Dirichlet-to-Robin)
    map: each step solves the interior problem with Robin data ``phi``.
    A noncompact piece carries ``u = 0`` on its cut.
    """
    if not model.is_positive:
        raise PositivityRequired("the eigenvalue diagnostic needs a positive model")
    system = assemble(model, grid, lam=0.0, gamma=0.0, degree=degree)
    bidx = grid.boundary_index
    weights = _angular_geometry(grid.theta)[1] if grid.theta is not None else np.ones(1)
    phi = np.ones(bidx.size)
    prev = np.inf
    for _ in range(max_iter):
        b = np.zeros(grid.size)
        b[bidx] = phi
        psi = solve_linear(system, b).values[bidx]
        est = float(np.dot(weights, phi * phi) / np.dot(weights, phi * psi))
        if abs(est - prev) < tol:
            return est
        prev = est
        phi = psi / np.sqrt(np.dot(weights, psi * psi))
    raise NoConvergence("inverse power iteration did not settle")


def dump_matrix(system: LinearSystem, path, which: str = "matrix") -> None:
    """Coordinate text dump ``row col value`` of the chosen matrix."""
    A = getattr(system, which).tocoo()
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        for i in order:
            fh.write(f"{A.row[i]} {A.col[i]} {A.data[i]:.17g}\n")
