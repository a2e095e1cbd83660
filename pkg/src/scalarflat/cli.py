"""Command-line front end: ``scalarflat <stage> --config FILE [--out DIR]``.

Stages read the artifacts of earlier stages from the output directory, so
each can be rerun on its own; ``pipeline`` runs them all and stops at the
first failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import io
from .barrier import BarrierResult, exhaust_barrier, select_mu
from .bracketing import (BracketPair, barrier_on, check_subsolution, check_supersolution,
                         select_epsilon_delta)
from .config import ExperimentConfig, load_config
from .elliptic import assemble, comparison_principle_test, m_matrix_check
from .errors import (BracketingFailed, ParseError, ScalarFlatError, UnsupportedModel,
                     ValidationError)
from .geometry import classify_end, end_growth, flat_ball
from .greens import greens_function, positivity_check
from .iterate import exhaust_solve, select_gamma
from .mesh import build_grid, field_from_csv, field_to_csv, graded_family
from .verify import completeness_check, full_report

ARTIFACTS = {
    "greens": ["greens.json"],
    "classify-ends": ["ends.json"],
    "barrier": ["barrier.json", "barrier_v.csv"],
    "bracket": ["bracket.json"],
    "solve": ["maxprinciple.json", "trace.csv", "solution.csv", "solve.json"],
    "verify": ["report.json"],
}
ORDER = ["greens", "classify-ends", "barrier", "bracket", "solve", "verify"]


class StageFailed(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


class Context:
    """Config plus lazily built model and grids shared by the stages."""

    def __init__(self, cfg: ExperimentConfig, out: str):
        self.cfg = cfg
        self.out = out
        self._model = None
        self._grids = None

    @property
    def model(self):
        if self._model is None:
            self._model = self.cfg.model()
        return self._model

    def path(self, name):
        return os.path.join(self.out, name)

    def grids(self):
        """``(radial barrier master, solve pieces)``."""
        if self._grids is None:
            cfg, model = self.cfg, self.model
            if model.compact:
                raise UnsupportedModel("compact models have no end to exhaust")
            remote = cfg.barrier_cuts[-1]
            if cfg.q is None:
                radial = graded_family(model, cfg.cuts[0], cfg.resolution, remote)
                solve = radial if cfg.angular is None else graded_family(
                    model, cfg.cuts[0], cfg.resolution, remote, cfg.angular)
            else:
                radial = build_grid(model, cfg.resolution, remote, cfg.q)
                solve = radial if cfg.angular is None else build_grid(
                    model, cfg.resolution, remote, cfg.q, cfg.angular)
            self._grids = (radial, [solve.subgrid(c) for c in cfg.cuts])
        return self._grids


def _model_summary(model) -> dict:
    return {"kind": model.kind, "n": model.n, "params": dict(model.params),
            "boundary_h": model.boundary_h}


def stage_greens(ctx: Context) -> None:
    ball = flat_ball(ctx.cfg.n)
    gr = greens_function(ball)
    doc = {"n": ctx.cfg.n, "corrector_constant": gr.corrector_constant,
           "B_residual": gr.B_residual, "positivity_margin": gr.positivity_margin,
           "G_boundary": float(gr.G.values[-1]), "G_inner_radius": float(gr.G.grid.r[0])}
    if ctx.cfg.kind == "punctured_ball":
        model = ctx.model
        pos = positivity_check(model)
        large, integral = classify_end(end_growth(model))
        doc["model"] = _model_summary(model)
        doc["positivity"] = {"positive": pos.positive,
                             "mean_curvature_margin": pos.mean_curvature_margin,
                             "harmonic_residual": pos.harmonic_residual}
        doc["end"] = {"is_large": large, "integral": integral}
    io.write_json(doc, ctx.path("greens.json"))


def stage_classify(ctx: Context) -> None:
    model = ctx.model
    growth = end_growth(model)
    large, integral = classify_end(growth)
    io.write_json({"model": _model_summary(model), "alpha": growth.alpha, "is_large": large,
                   "integral": integral, "samples": int(growth.t.size),
                   "t_max": float(growth.t[-1])}, ctx.path("ends.json"))


def stage_barrier(ctx: Context, jobs: int) -> None:
    model = ctx.model
    radial, _ = ctx.grids()
    result = exhaust_barrier(model, ctx.cfg.barrier_cuts, jobs=jobs, master=radial)
    mu = b_margin = None
    if model.is_positive:
        mu, b_margin = select_mu(model, result)
    doc = {"mu": mu, "B_margin": b_margin, "hopf_margin": result.hopf_margin,
           "rate": result.rate, "monotonicity_violations": result.monotonicity_violations,
           "converged": result.converged,
           "history": [list(h) for h in result.exhaustion_history],
           "positive_model": model.is_positive}
    field_to_csv(result.v_infinity, ctx.path("barrier_v.csv"))
    io.write_json(doc, ctx.path("barrier.json"))


def _load_barrier(ctx: Context) -> BarrierResult:
    doc = io.read_json(ctx.path("barrier.json"))
    v_inf = field_from_csv(ctx.path("barrier_v.csv"))
    return BarrierResult(v_inf, doc["hopf_margin"], [tuple(h) for h in doc["history"]],
                         doc["rate"], doc["monotonicity_violations"], doc["converged"],
                         doc["mu"], doc["B_margin"])


def stage_bracket(ctx: Context) -> None:
    model, cfg = ctx.model, ctx.cfg
    barrier = _load_barrier(ctx)
    _, pieces = ctx.grids()
    pair = select_epsilon_delta(model, pieces[-1], barrier, cfg.f(model), cfg.beta)
    io.write_json({"epsilon": pair.epsilon, "delta": pair.delta, "mu": pair.mu,
                   "sub_margin": pair.sub_margin, "super_margin": pair.super_margin,
                   "halvings": pair.halvings, "lower_bound": pair.lower_bound,
                   "upper_bound": pair.upper_bound, "certified_on_cut": pieces[-1].cut_radius},
                  ctx.path("bracket.json"))


def _load_bracket(ctx: Context) -> BracketPair:
    model, cfg = ctx.model, ctx.cfg
    doc = io.read_json(ctx.path("bracket.json"))
    barrier = _load_barrier(ctx)
    _, pieces = ctx.grids()
    v = barrier_on(barrier, pieces[-1])
    eps, delta = doc["epsilon"], doc["delta"]
    u_minus = v.with_values(eps * v.values)
    u_plus = v.with_values(eps * v.values + delta)
    f = cfg.f(model)
    sub = check_subsolution(model, pieces[-1], u_minus, f, cfg.beta)
    sup = check_supersolution(model, pieces[-1], u_plus, f, cfg.beta)
    if not (sub.certified and sup.certified):
        raise BracketingFailed("stored bracket no longer certifies on this grid")
    return BracketPair(eps, delta, doc["mu"], u_minus, u_plus, sub.boundary_margin,
                       sup.boundary_margin, doc["halvings"])


def stage_solve(ctx: Context, seed: int) -> None:
    model, cfg = ctx.model, ctx.cfg
    pair = _load_bracket(ctx)
    _, pieces = ctx.grids()
    f = cfg.f(model)
    gamma = select_gamma(f, cfg.beta, pair.u_plus, model.n)
    checks = []
    for grid in pieces:
        report = m_matrix_check(assemble(model, grid, lam=cfg.lam, gamma=gamma))
        checks.append({"cut": grid.cut_radius, "m_matrix": report.ok, "row": report.row,
                       "reason": report.reason})
    system = assemble(model, pieces[0], lam=cfg.lam, gamma=gamma)
    comparison = comparison_principle_test(system, cfg.trials, seed=seed)
    ok = all(c["m_matrix"] for c in checks) and comparison.violations == 0
    io.write_json({"lambda": cfg.lam, "gamma": gamma, "pieces": checks,
                   "comparison_trials": comparison.trials,
                   "comparison_violations": comparison.violations,
                   "comparison_max_u": comparison.max_u, "seed": seed, "ok": ok},
                  ctx.path("maxprinciple.json"))
    if not ok:
        raise BracketingFailed("discrete maximum principle check failed")
    result = exhaust_solve(model, pieces, pair, f, cfg.beta, cfg.tol, cfg.exhaust_tol,
                           cfg.lam, max_steps=cfg.max_steps)
    result.traces[-1].to_csv(ctx.path("trace.csv"))
    field_to_csv(result.solution, ctx.path("solution.csv"))
    io.write_json({"history": [list(h) for h in result.history],
                   "iterations": [t.iterations for t in result.traces],
                   "lambda": cfg.lam, "gamma": gamma, "converged": result.converged,
                   "u_min": result.solution.min(), "u_max": result.solution.max(),
                   "lower_bound": pair.lower_bound, "upper_bound": pair.upper_bound},
                  ctx.path("solve.json"))


def stage_verify(ctx: Context) -> None:
    model, cfg = ctx.model, ctx.cfg
    u = field_from_csv(ctx.path("solution.csv"))
    r = u.grid.r
    tol = 1e-12 * max(abs(r[0]), abs(r[-1]))
    cuts = [c for c in cfg.cuts if r[0] - tol <= c <= r[-1] + tol]
    comp = completeness_check(model, u, cuts)
    report = full_report(model, u.grid, u, cfg.f(model), cfg.beta, comp)
    report.to_json(ctx.path("report.json"))
    bad = [name for name in ("interior_residual", "boundary_residual")
           if getattr(report, name) > cfg.verify_tol]
    if bad or not comp.increasing or report.u_min <= 0:
        reasons = bad + ([] if comp.increasing else ["completeness lengths not increasing"])
        raise BracketingFailed("verification failed: " + ", ".join(reasons or ["u_min <= 0"]))


def _run(stage: str, ctx: Context, args) -> None:
    if stage == "greens":
        stage_greens(ctx)
    elif stage == "classify-ends":
        stage_classify(ctx)
    elif stage == "barrier":
        stage_barrier(ctx, args.jobs or ctx.cfg.jobs)
    elif stage == "bracket":
        stage_bracket(ctx)
    elif stage == "solve":
        stage_solve(ctx, ctx.cfg.seed if args.seed is None else args.seed)
    elif stage == "verify":
        stage_verify(ctx)


def run_pipeline(ctx: Context, args) -> None:
    for name in sum(ARTIFACTS.values(), []):
        if os.path.exists(ctx.path(name)):
            os.remove(ctx.path(name))
    for stage in ORDER:
        if stage == "greens" and ctx.cfg.kind != "punctured_ball":
            continue
        try:
            _run(stage, ctx, args)
        except (ScalarFlatError, ValueError, ArithmeticError) as exc:
            raise StageFailed(stage, exc) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scalarflat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ORDER + ["pipeline"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment configuration (INI)")
        p.add_argument("--out", help="output directory (overrides [run] out)")
        p.add_argument("--jobs", type=int, help="parallel exhaustion solves")
        p.add_argument("--seed", type=int, help="seed for randomised checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ParseError, ValidationError, OSError) as exc:
        print(f"scalarflat: invalid configuration: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    ctx = Context(cfg, out)
    try:
        if args.command == "pipeline":
            run_pipeline(ctx, args)
        else:
            try:
                _run(args.command, ctx, args)
            except (ScalarFlatError, ValueError, ArithmeticError, OSError) as exc:
                raise StageFailed(args.command, exc) from exc
    except StageFailed as exc:
        print(f"scalarflat: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
