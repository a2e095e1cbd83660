"""Model manifolds and the conformal transformation laws.

Every supported model is a conformally flat radial chart
``g = w(r)**(4/(n-2)) * delta`` on a shell of ``R^n`` with one spherical
boundary component; ``w`` is harmonic for the flat metric, so ``R(g) = 0``.

Mean curvature is the *average* of principal curvatures with respect to the
outward normal, so the flat unit ball has ``h = 1`` and the flat exterior of
the unit ball has ``h = -1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi
from typing import Callable

import numpy as np
from scipy import integrate

from . import fd
from .errors import (GridMismatch, InsufficientSamples, NonMonotoneVolume,
                     NonPositiveConformalFactor, UnsupportedModel)


def sphere_area(n: int) -> float:
    """Area of the unit sphere ``S^{n-1}`` in ``R^n``."""
    return 2.0 * pi ** (n / 2) / gamma(n / 2)


def fundamental_constant(n: int) -> float:
    """``c_n`` with ``-Laplace(c_n |x|^{2-n}) = delta_0``."""
    return 1.0 / ((n - 2) * sphere_area(n))


def critical_exponent(n: int) -> float:
    return n / (n - 2)


def _one(r):
    return np.ones_like(np.asarray(r, dtype=float))


def _zero(r):
    return np.zeros_like(np.asarray(r, dtype=float))


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """A conformally flat radial model manifold.

    ``inner``/``outer`` bound the radial chart; ``boundary_at`` says which
    end is the boundary sphere.  The other end is the noncompact end (or the
    centre of a compact ball, ``compact=True``).
    """

    n: int
    kind: str
    inner: float
    outer: float
    boundary_at: str
    weight: Callable = _one
    weight_dr: Callable = _one
    weight_drr: Callable = _zero
    compact: bool = False
    scalar_flat: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 3:
            raise UnsupportedModel(f"dimension n={self.n} < 3")
        if self.boundary_at not in ("inner", "outer"):
            raise UnsupportedModel(f"boundary_at={self.boundary_at!r}")

    @property
    def boundary_radius(self) -> float:
        return self.inner if self.boundary_at == "inner" else self.outer

    @property
    def normal_sign(self) -> float:
        """+1 when the outward normal points to larger r."""
        return 1.0 if self.boundary_at == "outer" else -1.0

    @property
    def flat_boundary_h(self) -> float:
        return self.normal_sign / self.boundary_radius

    def w(self, r):
        return np.asarray(self.weight(np.asarray(r, dtype=float)), dtype=float)

    def w_r(self, r):
        return np.asarray(self.weight_dr(np.asarray(r, dtype=float)), dtype=float)

    def w_rr(self, r):
        return np.asarray(self.weight_drr(np.asarray(r, dtype=float)), dtype=float)

    @property
    def boundary_h(self) -> float:
        """``h(g)`` on the boundary sphere (constant: the model is radial)."""
        n, rb = self.n, self.boundary_radius
        wb = float(self.w(rb))
        bw = self.normal_sign * float(self.w_r(rb)) + 0.5 * (n - 2) * self.flat_boundary_h * wb
        return 2.0 / (n - 2) * bw / wb ** (n / (n - 2))

    def boundary_h_on(self, grid) -> np.ndarray:
        return np.full(grid.boundary_index.size, self.boundary_h)

    @property
    def is_positive(self) -> bool:
        return self.scalar_flat and self.boundary_h > 0.0

    def flat_laplacian_of_weight(self, r):
        r = np.asarray(r, dtype=float)
        return self.w_rr(r) + (self.n - 1) * self.w_r(r) / r


def flat_exterior(n: int = 3, r0: float = 1.0) -> ManifoldModel:
    """``R^n`` minus the open ball of radius ``r0``."""
    if r0 <= 0:
        raise UnsupportedModel("r0 must be positive")
    return ManifoldModel(n, "flat_exterior", r0, np.inf, "inner",
                         _one, _zero, _zero, params={"r0": r0})


def flat_ball(n: int = 3) -> ManifoldModel:
    """The closed flat unit ball (compact, ``h = 1``)."""
    return ManifoldModel(n, "flat_ball", 0.0, 1.0, "outer", _one, _zero, _zero,
                         compact=True)


def punctured_ball(n: int, a: float, c: float, corrector: float = 1.0) -> ManifoldModel:
    """Unit ball minus the origin with ``w = a * G_0 + c``.

    ``G_0 = c_n (|x|^{2-n} + corrector)`` is the Green's function of the
    ball with ``B G_0 = 0``; ``corrector = 1`` is its exact value.
    """
    cn = fundamental_constant(n)
    p = 2 - n

    def w(r):
        return a * (cn * (r**p + corrector)) + c

    def w_r(r):
        return a * cn * p * r ** (p - 1)

    def w_rr(r):
        return a * cn * p * (p - 1) * r ** (p - 2)

    model = ManifoldModel(n, "punctured_ball", 0.0, 1.0, "outer", w, w_r, w_rr,
                          params={"a": a, "c": c, "corrector": corrector})
    check_punctured(model)
    return model


def synthetic(n: int, inner: float, outer: float, boundary_at: str,
              w, w_r, w_rr, compact: bool = False) -> ManifoldModel:
    """Model from user-supplied radial profiles; ``w`` must be flat-harmonic."""
    return ManifoldModel(n, "synthetic", inner, outer, boundary_at, w, w_r, w_rr,
                         compact=compact)


def check_punctured(model: ManifoldModel, radii=None) -> None:
    if radii is None:
        radii = np.logspace(-8, 0, 65)
    vals = model.w(radii)
    if np.any(vals <= 0):
        raise NonPositiveConformalFactor("w must be positive on the punctured ball")
    lead = vals[:2] * radii[:2] ** (model.n - 2)
    if not (lead[0] > 0 and abs(lead[0] - lead[1]) <= 1e-3 * lead[0] + 1e-12):
        raise NonPositiveConformalFactor("w |x|^{n-2} must tend to a positive constant")


def _check_compatible(model, grid, u):
    if grid.n != model.n or grid.boundary_at != model.boundary_at:
        raise GridMismatch("grid was not built for this model")
    values = u.values if hasattr(u, "values") else np.asarray(u, dtype=float)
    if hasattr(u, "grid") and not (u.grid is grid or u.grid.same_as(grid)):
        raise GridMismatch("field lives on a different grid")
    if values.size != grid.size:
        raise GridMismatch(f"{values.size} values for {grid.size} nodes")
    return values


def conformal_laplacian(model, grid, u, order: int = 4) -> np.ndarray:
    """``L_g u`` at every node, evaluated through the flat frame.

    Uses ``L_g u = w^{-(n+2)/(n-2)} Delta(w u)`` with the product rule, so
    derivatives of the analytic ``w`` are exact and only ``u`` is
    differenced.
    """
    values = _check_compatible(model, grid, u)
    n = model.n
    U = values.reshape(grid.shape)
    r = grid.r
    w = model.w(r)[:, None]
    w_r = model.w_r(r)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        lap_w = np.where(r[:, None] > 0, model.flat_laplacian_of_weight(r)[:, None], 0.0)
    u_r, _ = fd.radial_derivatives(r, U, order)
    lap_u = fd.flat_laplacian(grid, U, order)
    lap_wu = U * lap_w + 2.0 * w_r * u_r + w * lap_u
    return np.asarray(lap_wu / w ** ((n + 2) / (n - 2)), dtype=float).reshape(-1)


def conformal_boundary_operator(model, grid, u, order: int = 4) -> np.ndarray:
    """``B_g u`` on dM nodes via ``B_g u = w^{-n/(n-2)} B_delta(w u)``."""
    values = _check_compatible(model, grid, u)
    n, rb = model.n, model.boundary_radius
    U = values.reshape(grid.shape)
    ub = U[grid.boundary_k]
    du = fd.boundary_normal_derivative(grid, U, order)
    wb, dwb = float(model.w(rb)), model.normal_sign * float(model.w_r(rb))
    b_flat = dwb * ub + wb * du + 0.5 * (n - 2) * model.flat_boundary_h * wb * ub
    return np.asarray(b_flat / wb ** (n / (n - 2)), dtype=float)


def conformal_scalar_curvature(model, grid, u, order: int = 2) -> np.ndarray:
    """``R(u^{4/(n-2)} g)`` at the interior nodes (ordered as ``grid.interior_index``)."""
    values = _check_compatible(model, grid, u)
    if values.min() <= 0:
        raise NonPositiveConformalFactor(f"min u = {values.min():.3e}")
    n = model.n
    idx = grid.interior_index
    lu = conformal_laplacian(model, grid, values, order)[idx]
    return -4.0 * (n - 1) / (n - 2) * lu / values[idx] ** ((n + 2) / (n - 2))


def conformal_mean_curvature(model, grid, u, order: int = 2) -> np.ndarray:
    """``h(u^{4/(n-2)} g)`` on the dM nodes."""
    values = _check_compatible(model, grid, u)
    ub = values[grid.boundary_index]
    if ub.min() <= 0:
        raise NonPositiveConformalFactor(f"min u on boundary = {ub.min():.3e}")
    n = model.n
    bu = conformal_boundary_operator(model, grid, values, order)
    return 2.0 / (n - 2) * bu / ub ** (n / (n - 2))


def flat_frame_transfer(model, u, direction: str):
    """Multiply (``to_flat``) or divide (``from_flat``) a field by ``w``."""
    from .mesh import Field

    w = model.w(u.grid.node_radii())
    if np.any(w <= 0):
        raise NonPositiveConformalFactor("conformal factor must be positive")
    if direction == "to_flat":
        return Field(u.grid, w * u.values)
    if direction == "from_flat":
        return Field(u.grid, u.values / w)
    raise ValueError(f"direction must be 'to_flat' or 'from_flat', got {direction!r}")


@dataclass(frozen=True)
class EndGrowth:
    """Volume ``V(t)`` of an end within distance ``t``, with tail exponent ``alpha``."""

    t: np.ndarray
    V: np.ndarray
    alpha: float
    t_min: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if t.shape != V.shape or t.ndim != 1:
            raise InsufficientSamples("t and V must be matching 1-D arrays")
        if np.any(np.diff(t) <= 0) or np.any(np.diff(V) < 0):
            raise NonMonotoneVolume("t must increase strictly and V must be nondecreasing")
        if np.any(V[t >= self.t_min] <= 0):
            raise NonMonotoneVolume("V must be positive beyond t_min")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "V", V)


def classify_end(growth: EndGrowth, t_max_required: float = 1e3, min_samples: int = 16):
    """Return ``(is_large, estimate of int_1^inf t / V(t) dt)``.

    The sampled part is integrated by the trapezoid rule on ``[1, T]``; the
    tail uses ``V ~ (V(T)/T^alpha) t^alpha``.  The integral is infinite when
    ``alpha <= 2``.
    """
    t, V = growth.t, growth.V
    if t.size < min_samples or t[0] > 1.0 or t[-1] < t_max_required:
        raise InsufficientSamples(
            f"need >= {min_samples} samples spanning [1, {t_max_required:g}]")
    keep = t >= 1.0
    tt, vv = t[keep], V[keep]
    if tt[0] > 1.0:
        v1 = np.exp(np.interp(0.0, np.log(t), np.log(np.maximum(V, 1e-300))))
        tt, vv = np.concatenate([[1.0], tt]), np.concatenate([[v1], vv])
    body = float(integrate.trapezoid(tt / vv, tt))
    if growth.alpha <= 2.0:
        return False, float("inf")
    T, VT = tt[-1], vv[-1]
    tail = T**2 / (VT * (growth.alpha - 2.0))
    return True, body + tail


def power_growth(alpha: float, t_max: float = 1e4, samples: int = 400, coeff: float = 1.0) -> EndGrowth:
    t = np.logspace(0.0, np.log10(t_max), samples)
    return EndGrowth(t, coeff * t**alpha, alpha)


def end_growth(model: ManifoldModel, t_max: float = 1e4, samples: int = 400) -> EndGrowth:
    """Sampled volume growth of the model's end, measured from the boundary."""
    n = model.n
    area = sphere_area(n)
    if model.compact:
        raise UnsupportedModel("compact models have no end")
    if model.kind == "flat_exterior":
        r0 = model.params["r0"]
        t = np.logspace(0.0, np.log10(t_max), samples)
        V = area * ((r0 + t) ** n - r0**n) / n
        return EndGrowth(t, V, float(n))
    if model.boundary_at != "outer":
        raise UnsupportedModel("end sampling supports exterior and punctured charts")

    def speed(s):
        return float(model.w(s)) ** (2.0 / (n - 2))

    def density(s):
        return area * float(model.w(s)) ** (2.0 * n / (n - 2)) * s ** (n - 1)

    rb = model.boundary_radius
    # march inward on a log scale until the distance exceeds t_max
    radii = [rb]
    ts, vs = [0.0], [0.0]
    r = rb
    while ts[-1] < t_max:
        r_next = r * 0.9
        ts.append(ts[-1] + integrate.quad(speed, r_next, r, epsabs=0, epsrel=1e-12)[0])
        vs.append(vs[-1] + integrate.quad(density, r_next, r, epsabs=0, epsrel=1e-12)[0])
        radii.append(r_next)
        r = r_next
        if r < 1e-300:
            raise UnsupportedModel("end too short to reach t_max")
    ts, vs = np.array(ts), np.array(vs)
    grid_t = np.logspace(0.0, np.log10(ts[-1]), samples)
    V = np.exp(np.interp(np.log(grid_t), np.log(ts[1:]), np.log(vs[1:])))
    tail = slice(-samples // 10, None)
    alpha = float(np.polyfit(np.log(grid_t[tail]), np.log(V[tail]), 1)[0])
    return EndGrowth(grid_t, V, alpha)
