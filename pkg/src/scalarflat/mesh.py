"""Graded grids on compact pieces and scalar fields living on them.

A piece is always a radial shell ``a <= r <= b`` of the flat chart, optionally
crossed with a polar-angle grid on ``[0, pi]`` (axisymmetric, ``n = 3``).
Radial coordinates are stored increasing; which end is the physical boundary
``dM`` and which is the truncation cut ``N`` depends on the model.

Flat node index is ``k * M + j`` for radial index ``k`` and angular index ``j``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CutOutOfRange, IncompatibleGrids, InvalidResolution, UnsupportedModel

DM = "dM"
CUT = "N"
INTERIOR = "interior"

MIN_RESOLUTION = 4
MAX_STRETCH = 1.2


@dataclass(frozen=True, eq=False)
class Grid:
    r: np.ndarray
    theta: np.ndarray | None
    n: int
    boundary_at: str  # "inner" or "outer": radial end carrying dM
    cut_at: str | None  # opposite end, or None for compact pieces
    q: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < MIN_RESOLUTION or np.any(np.diff(r) <= 0):
            raise InvalidResolution("radial nodes must be strictly increasing, at least 4 of them")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)
        if self.theta is not None:
            th = np.asarray(self.theta, dtype=float)
            if th.size < 3 or np.any(np.diff(th) <= 0):
                raise InvalidResolution("polar nodes must be strictly increasing, at least 3")
            th.setflags(write=False)
            object.__setattr__(self, "theta", th)

    @property
    def topology(self) -> str:
        return "radial" if self.theta is None else "polar"

    @property
    def shape(self) -> tuple[int, int]:
        return (self.r.size, 1 if self.theta is None else self.theta.size)

    @property
    def size(self) -> int:
        k, m = self.shape
        return k * m

    @property
    def compact(self) -> bool:
        return self.cut_at is None

    def _end_index(self, end):
        return 0 if end == "inner" else self.r.size - 1

    @property
    def boundary_k(self) -> int:
        return self._end_index(self.boundary_at)

    @property
    def cut_k(self) -> int | None:
        return None if self.cut_at is None else self._end_index(self.cut_at)

    @property
    def radial_tags(self) -> np.ndarray:
        tags = np.full(self.r.size, INTERIOR, dtype=object)
        tags[self.boundary_k] = DM
        if self.cut_k is not None:
            tags[self.cut_k] = CUT
        return tags

    @property
    def tags(self) -> np.ndarray:
        return np.repeat(self.radial_tags, self.shape[1])

    def _flat(self, k):
        m = self.shape[1]
        return np.arange(k * m, (k + 1) * m)

    @property
    def boundary_index(self) -> np.ndarray:
        return self._flat(self.boundary_k)

    @property
    def cut_index(self) -> np.ndarray:
        if self.cut_k is None:
            return np.empty(0, dtype=int)
        return self._flat(self.cut_k)

    @property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.tags == INTERIOR)

    @property
    def boundary_theta(self) -> np.ndarray | None:
        return None if self.theta is None else self.theta.copy()

    def node_radii(self) -> np.ndarray:
        return np.repeat(self.r, self.shape[1])

    def same_as(self, other: "Grid") -> bool:
        if self is other:
            return True
        return (
            self.n == other.n
            and self.boundary_at == other.boundary_at
            and self.cut_at == other.cut_at
            and np.array_equal(self.r, other.r)
            and _same_theta(self.theta, other.theta)
        )

    def subgrid(self, cut: float) -> "Grid":
        """Nested piece: the nodes between dM and the node nearest ``cut``."""
        if self.cut_at is None:
            raise CutOutOfRange("compact grids have no cut")
        k = int(np.argmin(np.abs(self.r - cut)))
        if self.cut_at == "outer":
            r = self.r[: k + 1]
        else:
            r = self.r[k:]
        if r.size < MIN_RESOLUTION:
            raise CutOutOfRange(f"cut {cut} leaves fewer than {MIN_RESOLUTION} nodes")
        return Grid(r.copy(), self.theta, self.n, self.boundary_at, self.cut_at, self.q)

    @property
    def cut_radius(self) -> float | None:
        return None if self.cut_k is None else float(self.r[self.cut_k])


def _same_theta(a, b):
    if a is None or b is None:
        return a is None and b is None
    return np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size != self.grid.size:
            raise IncompatibleGrids(f"{v.size} values for {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_array(self) -> np.ndarray:
        """Values reshaped to ``(radial, angular)``."""
        return self.values.reshape(self.grid.shape)

    @property
    def on_boundary(self) -> np.ndarray:
        return self.values[self.grid.boundary_index]

    @property
    def on_cut(self) -> np.ndarray:
        return self.values[self.grid.cut_index]

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())


def geometric_nodes(a: float, b: float, resolution: int, q: float) -> np.ndarray:
    """``resolution`` nodes on ``[a, b]`` whose spacing grows by ``q`` per cell."""
    k = resolution - 1
    if q == 1.0:
        r = np.linspace(a, b, resolution)
    else:
        h0 = (b - a) * (q - 1.0) / (q**k - 1.0)
        r = a + h0 * (q ** np.arange(resolution) - 1.0) / (q - 1.0)
        r[-1] = b
    r[0] = a
    if np.any(np.diff(r) <= 0):
        raise InvalidResolution(f"stretch q={q} collapses {resolution} nodes on [{a}, {b}]")
    return r


def auto_stretch(a: float, b: float, resolution: int) -> float:
    """Log-uniform ratio ``(b/a)**(1/K)`` capped at the grading limit."""
    if a <= 0.0:
        return 1.0
    return float(min((b / a) ** (1.0 / (resolution - 1)), MAX_STRETCH))


def build_grid(model, resolution: int, cut: float | None = None, q: float | None = None,
               angular: int | None = None) -> Grid:
    """Grid of a compact piece of ``model``.

    ``cut`` is the outer radius for exterior models and the inner radius for
    punctured models; compact models take no cut.  ``q=None`` picks a
    log-uniform stretch (spacing proportional to ``r``).  ``angular`` switches
    to the axisymmetric polar grid with that many angle nodes.
    """
    if resolution < MIN_RESOLUTION:
        raise InvalidResolution(f"resolution {resolution} < {MIN_RESOLUTION}")
    if q is not None and not (1.0 <= q <= MAX_STRETCH):
        raise InvalidResolution(f"stretch q={q} outside [1, {MAX_STRETCH}]")
    if angular is not None and model.n != 3:
        raise UnsupportedModel("polar grids are axisymmetric and require n = 3")

    rb = model.boundary_radius
    if angular is not None and model.compact and model.inner <= 0.0:
        raise UnsupportedModel("polar grids need an annulus; the ball contains the origin")
    if model.compact:
        if cut is not None:
            raise CutOutOfRange("compact models take no cut")
        a, b, cut_at = model.inner, rb, None
    else:
        if cut is None:
            raise CutOutOfRange("noncompact models need a cut")
        if model.boundary_at == "inner":
            if not (rb < cut < model.outer):
                raise CutOutOfRange(f"cut {cut} not in ({rb}, {model.outer})")
            a, b, cut_at = rb, cut, "outer"
        else:
            if not (model.inner < cut < rb):
                raise CutOutOfRange(f"cut {cut} not in ({model.inner}, {rb})")
            a, b, cut_at = cut, rb, "inner"
    if q is None:
        q = auto_stretch(a, b, resolution)
    r = geometric_nodes(a, b, resolution, q)
    theta = None if angular is None else np.linspace(0.0, np.pi, angular)
    return Grid(r, theta, model.n, model.boundary_at, cut_at, q)


def nested_grids(model, cuts, resolution: int, q: float | None = None,
                 angular: int | None = None) -> list[Grid]:
    """Nested pieces sharing the nodes of one master grid.

    The master grid reaches the most remote cut with ``resolution`` nodes;
    each piece is the part of it between dM and the node nearest its cut, so
    restriction between pieces is exact sampling.
    """
    cuts = [float(c) for c in cuts]
    remote = max(cuts) if model.boundary_at == "inner" else min(cuts)
    master = build_grid(model, resolution, remote, q, angular)
    return [master.subgrid(c) for c in cuts]


def graded_family(model, base_cut: float, resolution: int, remote_cut: float,
                  angular: int | None = None) -> Grid:
    """Master grid whose piece at ``base_cut`` has ``resolution`` nodes.

    The piece uses the log-uniform nodes ``a q^k``, which are continued with
    the same ratio out to ``remote_cut``; pieces for any cut in between are
    then :meth:`Grid.subgrid` views sharing those nodes exactly.
    """
    base = build_grid(model, resolution, base_cut, None, angular)
    q = base.q
    if q >= MAX_STRETCH or q <= 1.0:
        raise InvalidResolution("graded families need a log-uniform stretch below the cap")
    k_base = resolution - 1
    if model.boundary_at == "inner":
        r0 = model.boundary_radius
        if remote_cut < base_cut:
            raise CutOutOfRange("remote cut must lie beyond the base cut")
        k_max = max(k_base, int(np.ceil(np.log(remote_cut / r0) / np.log(q) - 1e-9)))
        r = r0 * q ** np.arange(k_max + 1, dtype=float)
        r[0] = r0
        r[k_base] = base_cut
    else:
        rb = model.boundary_radius
        if remote_cut > base_cut:
            raise CutOutOfRange("remote cut must lie beyond the base cut")
        k_max = max(k_base, int(np.ceil(np.log(rb / remote_cut) / np.log(q) - 1e-9)))
        r = rb * q ** -np.arange(k_max, -1, -1, dtype=float)
        r[-1] = rb
        r[-1 - k_base] = base_cut
    return Grid(r, base.theta, model.n, model.boundary_at, base.cut_at, q)


def restrict(field: Field, finer: Grid, coarser: Grid) -> Field:
    """Sample ``field`` (on ``finer``) onto ``coarser``.

    Coincident radii are copied exactly; other radii are linearly
    interpolated along each ray.
    """
    if field.grid is not finer and not field.grid.same_as(finer):
        raise IncompatibleGrids("field does not live on the finer grid")
    if finer.same_as(coarser):
        return Field(coarser, field.values)
    if finer.n != coarser.n or not _same_theta(finer.theta, coarser.theta):
        raise IncompatibleGrids("grids differ in dimension or angular nodes")
    rf, rc = finer.r, coarser.r
    tol = 1e-12 * max(1.0, float(np.abs(rf).max()))
    if rc[0] < rf[0] - tol or rc[-1] > rf[-1] + tol:
        raise IncompatibleGrids("coarser grid extends beyond the finer grid")
    U = field.as_array()
    out = np.empty((rc.size, U.shape[1]))
    pos = np.clip(np.searchsorted(rf, rc), 0, rf.size - 1)
    for i, (rr, p) in enumerate(zip(rc, pos)):
        cand = [c for c in (p - 1, p) if 0 <= c < rf.size]
        best = min(cand, key=lambda c: abs(rf[c] - rr))
        if abs(rf[best] - rr) <= tol:
            out[i] = U[best]
        else:
            lo = max(0, min(p - 1, rf.size - 2))
            t = (rr - rf[lo]) / (rf[lo + 1] - rf[lo])
            out[i] = (1.0 - t) * U[lo] + t * U[lo + 1]
    return Field(coarser, out.reshape(-1))


def _num(x: float) -> str:
    return f"{x:.17g}"


def field_to_csv(field: Field, path) -> None:
    g = field.grid
    header = (f"# n={g.n} boundary_at={g.boundary_at} cut_at={g.cut_at} "
              f"q={_num(g.q)} topology={g.topology}")
    radii = g.node_radii()
    tags = g.tags
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        if g.theta is None:
            w.writerow(["r", "tag", "value"])
            for rr, t, v in zip(radii, tags, field.values):
                w.writerow([_num(rr), t, _num(v)])
        else:
            th = np.tile(g.theta, g.r.size)
            w.writerow(["r", "theta", "tag", "value"])
            for rr, tt, t, v in zip(radii, th, tags, field.values):
                w.writerow([_num(rr), _num(tt), t, _num(v)])


def field_from_csv(path) -> Field:
    """Rebuild grid and field from :func:`field_to_csv` output."""
    with open(path, newline="") as fh:
        header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        rows = list(csv.DictReader(fh))
    r = np.array([float(row["r"]) for row in rows])
    values = np.array([float(row["value"]) for row in rows])
    if meta["topology"] == "polar":
        th_all = np.array([float(row["theta"]) for row in rows])
        m = int(np.count_nonzero(r == r[0]))
        theta, radii = th_all[:m], r[::m]
    else:
        theta, radii = None, r
    cut_at = None if meta["cut_at"] == "None" else meta["cut_at"]
    grid = Grid(radii, theta, int(meta["n"]), meta["boundary_at"], cut_at, float(meta["q"]))
    tags = [row["tag"] for row in rows]
    if list(grid.tags) != tags:
        raise IncompatibleGrids(f"{path}: node tags do not match the reconstructed grid")
    return Field(grid, values)
