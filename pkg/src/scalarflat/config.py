"""Experiment configuration: an INI document read with :mod:`configparser`.

Sections and keys (defaults in brackets)::

    [model]       kind = punctured_ball | flat_exterior | flat_ball
                  n [3]; a, c (punctured_ball); r0 [1] (flat_exterior)
    [problem]     mode = critical | general [general]; beta (required unless critical)
                  f = mean_curvature | constant | cos | table [mean_curvature]
                  f_value [1]   (constant value, or cos amplitude)
                  f_table       (CSV file of theta,value samples, relative to the config)
                  lambda [1]
    [grid]        resolution; angular (polar nodes, optional)
                  cut; pieces [3]; cuts (explicit list, overrides cut/pieces)
                  barrier_levels [16]; barrier_cuts (explicit list)
                  q = auto | number [auto]
    [tolerances]  iteration [1e-9]; exhaustion [= iteration]; verify [1e-6]
                  max_steps [10000]
    [run]         seed [0]; jobs [1]; trials [1000]; out [out]

Successive cuts step by a factor 2 towards infinity (outer radii double for
exterior models, inner radii halve for punctured ones).  Every validation
problem is collected before :class:`~scalarflat.errors.ValidationError` is
raised.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import critical_exponent, flat_ball, flat_exterior, punctured_ball
from .greens import build_punctured_model, greens_function

KINDS = ("punctured_ball", "flat_exterior", "flat_ball")
F_KINDS = ("mean_curvature", "constant", "cos", "table")
SECTIONS = ("model", "problem", "grid", "tolerances", "run")


@dataclass
class ExperimentConfig:
    kind: str
    n: int
    params: dict
    beta: float
    mode: str
    f_kind: str
    f_value: float = 1.0
    f_table: tuple | None = None
    lam: float = 1.0
    resolution: int = 1024
    angular: int | None = None
    cuts: list = field(default_factory=list)
    barrier_cuts: list = field(default_factory=list)
    q: float | None = None
    tol: float = 1e-9
    exhaust_tol: float = 1e-9
    verify_tol: float = 1e-6
    max_steps: int = 10_000
    seed: int = 0
    jobs: int = 1
    trials: int = 1000
    out: str = "out"

    def model(self):
        if self.kind == "flat_exterior":
            return flat_exterior(self.n, self.params["r0"])
        if self.kind == "flat_ball":
            return flat_ball(self.n)
        if self.params.get("greens", True):
            ball = flat_ball(self.n)
            return build_punctured_model(ball, self.params["a"], self.params["c"],
                                         greens_function(ball, resolution=1025))
        return punctured_ball(self.n, self.params["a"], self.params["c"])

    def f(self, model):
        """Boundary data as accepted by :func:`scalarflat.bracketing.boundary_values`."""
        if self.f_kind == "mean_curvature":
            return float(model.boundary_h)
        if self.f_kind == "constant":
            return self.f_value
        if self.f_kind == "cos":
            amp = self.f_value
            return lambda theta: amp * np.cos(theta)
        theta, values = self.f_table
        return lambda t: np.interp(t, theta, values)


class _Reader:
    def __init__(self, parser):
        self.parser = parser
        self.errors = []

    def raw(self, section, key):
        if self.parser.has_option(section, key):
            value = self.parser.get(section, key).strip()
            return value if value != "" else None
        return None

    def get(self, section, key, kind, default=None, required=False):
        value = self.raw(section, key)
        if value is None:
            if required:
                self.errors.append((f"{section}.{key}", "is required"))
            return default
        try:
            if kind is int:
                return int(value)
            if kind is float:
                x = float(value)
                if not math.isfinite(x):
                    raise ValueError
                return x
            if kind is list:
                return [float(v) for v in value.replace(",", " ").split()]
            return value
        except ValueError:
            self.errors.append((f"{section}.{key}", f"cannot read {value!r} as {kind.__name__}"))
            return default


def _schedule(first: float, count: int, outward: bool) -> list:
    factor = 2.0 if outward else 0.5
    return [first * factor**j for j in range(count)]


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ParseError(line, getattr(exc, "message", str(exc))) from exc
    rd = _Reader(parser)
    for section in parser.sections():
        if section not in SECTIONS:
            rd.errors.append((section, "unknown section"))

    kind = rd.get("model", "kind", str, required=True)
    n = rd.get("model", "n", int, 3)
    params = {}
    if kind is not None and kind not in KINDS:
        rd.errors.append(("model.kind", f"must be one of {', '.join(KINDS)}"))
    if n is not None and n < 3:
        rd.errors.append(("model.n", "must be at least 3"))
    if kind == "punctured_ball":
        params["a"] = rd.get("model", "a", float, required=True)
        params["c"] = rd.get("model", "c", float, required=True)
        for key in ("a", "c"):
            if params[key] is not None and params[key] <= 0:
                rd.errors.append((f"model.{key}", "must be positive"))
    elif kind == "flat_exterior":
        params["r0"] = rd.get("model", "r0", float, 1.0)
        if params["r0"] is not None and params["r0"] <= 0:
            rd.errors.append(("model.r0", "must be positive"))

    mode = rd.get("problem", "mode", str, "general")
    if mode not in ("critical", "general"):
        rd.errors.append(("problem.mode", "must be 'critical' or 'general'"))
    beta = rd.get("problem", "beta", float)
    if beta is None and mode == "critical" and n is not None and n >= 3:
        beta = critical_exponent(n)
    elif beta is None:
        rd.errors.append(("beta", "is required unless mode = critical"))
    if beta is not None and beta <= 1:
        rd.errors.append(("beta", "must exceed 1"))
    if (beta is not None and mode == "critical" and n is not None and n >= 3
            and not np.isclose(beta, critical_exponent(n), rtol=0, atol=1e-12)):
        rd.errors.append(("beta", f"critical mode needs beta = {critical_exponent(n)}"))

    f_kind = rd.get("problem", "f", str, "mean_curvature")
    f_value = rd.get("problem", "f_value", float, 1.0)
    f_table = None
    if f_kind not in F_KINDS:
        rd.errors.append(("problem.f", f"must be one of {', '.join(F_KINDS)}"))
    lam = rd.get("problem", "lambda", float, 1.0)
    if lam is not None and lam <= 0:
        rd.errors.append(("problem.lambda", "must be positive"))

    resolution = rd.get("grid", "resolution", int, required=True)
    angular = rd.get("grid", "angular", int)
    if resolution is not None and resolution < 4:
        rd.errors.append(("grid.resolution", "must be at least 4"))
    if angular is not None and (angular < 3 or n != 3):
        rd.errors.append(("grid.angular", "polar grids need n = 3 and at least 3 nodes"))
    if f_kind in ("cos", "table") and angular is None:
        rd.errors.append(("problem.f", f"f = {f_kind} varies with the polar angle; set grid.angular"))
    if f_kind == "table":
        f_table = _read_table(rd, base_dir)

    q_raw = rd.raw("grid", "q")
    q = None
    if q_raw not in (None, "auto"):
        q = rd.get("grid", "q", float)
        if q is not None and not (1.0 <= q <= 1.2):
            rd.errors.append(("grid.q", "must lie in [1, 1.2]"))

    outward = kind == "flat_exterior"
    cuts = rd.get("grid", "cuts", list)
    if cuts is None and kind != "flat_ball":
        first = rd.get("grid", "cut", float, required=True)
        pieces = rd.get("grid", "pieces", int, 3)
        if pieces is not None and pieces < 3:
            rd.errors.append(("grid.pieces", "need at least 3 pieces"))
        cuts = _schedule(first, pieces, outward) if first is not None and pieces else []
    cuts = cuts or []
    barrier_cuts = rd.get("grid", "barrier_cuts", list)
    if barrier_cuts is None and cuts:
        levels = rd.get("grid", "barrier_levels", int, 16)
        barrier_cuts = _schedule(cuts[-1], max(levels or 0, 0), outward)
    barrier_cuts = barrier_cuts or []
    if kind not in (None, "flat_ball") and cuts:
        seq = np.array(cuts if outward else [1.0 / c for c in cuts if c > 0])
        if np.any(np.diff(seq) <= 0):
            rd.errors.append(("grid.cuts", "must move monotonically towards the end"))
        bseq = np.array(barrier_cuts if outward else [1.0 / c for c in barrier_cuts if c > 0])
        if bseq.size < 3 or np.any(np.diff(bseq) <= 0) or bseq[-1] / bseq[0] < 1e2:
            rd.errors.append(("grid.barrier_cuts",
                              "need >= 3 cuts moving towards the end and spanning a factor >= 100"))
        if barrier_cuts and barrier_cuts[0] != cuts[-1]:
            if (outward and barrier_cuts[0] < cuts[-1]) or (not outward and barrier_cuts[0] > cuts[-1]):
                rd.errors.append(("grid.barrier_cuts", "must start at or beyond the last piece"))

    tol = rd.get("tolerances", "iteration", float, 1e-9)
    exhaust_tol = rd.get("tolerances", "exhaustion", float, tol)
    verify_tol = rd.get("tolerances", "verify", float, 1e-6)
    for key, value in (("iteration", tol), ("exhaustion", exhaust_tol), ("verify", verify_tol)):
        if value is not None and not (0 < value <= 1e-3):
            rd.errors.append((f"tolerances.{key}", "must lie in (0, 1e-3]"))
    max_steps = rd.get("tolerances", "max_steps", int, 10_000)

    seed = rd.get("run", "seed", int, 0)
    jobs = rd.get("run", "jobs", int, 1)
    trials = rd.get("run", "trials", int, 1000)
    out = rd.get("run", "out", str, "out")
    if jobs is not None and jobs < 1:
        rd.errors.append(("run.jobs", "must be at least 1"))

    if rd.errors:
        raise ValidationError(rd.errors)
    return ExperimentConfig(kind, n, params, float(beta), mode, f_kind, f_value, f_table, lam,
                            resolution, angular, [float(c) for c in cuts],
                            [float(c) for c in barrier_cuts], q, tol, exhaust_tol, verify_tol,
                            max_steps, seed, jobs, trials, out)


def _read_table(rd: _Reader, base_dir: str):
    path = rd.raw("problem", "f_table")
    if path is None:
        rd.errors.append(("problem.f_table", "is required for f = table"))
        return None
    path = os.path.join(base_dir, path)
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        data = np.array([[float(a), float(b)] for a, b, *_ in rows])
    except (OSError, ValueError) as exc:
        rd.errors.append(("problem.f_table", f"unreadable: {exc}"))
        return None
    if data.shape[0] < 2 or np.any(np.diff(data[:, 0]) <= 0):
        rd.errors.append(("problem.f_table", "need >= 2 rows with increasing theta"))
        return None
    if data[0, 0] > 0 or data[-1, 0] < np.pi - 1e-12:
        rd.errors.append(("problem.f_table", "theta samples must cover [0, pi]"))
    return data[:, 0], data[:, 1]


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
