"""Experiment drivers behind the command line.

Each driver returns an ``Outcome``: the primary result table, any side
tables, the plots to render and a list of failed hard checks. Replicate
``r`` always uses stream ``(seed, r)``; iterate selection for replicate
``r`` uses stream ``(seed, replicates + r)``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .core import make_stream
from .diagnostics import ar1_moment_study, bias_from_samples, fit_loglog, rate_reference
from .iwae import LinearGaussianModel, exact_marginal_grad_linear_gaussian, mlmc_iwae_batch
from .mlmc import LevelDistribution
from .optim import iterate_selector, run_optimizer, select_random_iterate
from .output import PLOT_KINDS, ResultTable, emit_plot
from .problems import AR1Fixture, ExactGradientProblem, GaussianMeanProblem


@dataclass
class Outcome:
    name: str
    table: ResultTable
    extra: dict = field(default_factory=dict)   # file name -> table
    plots: list = field(default_factory=list)   # (file name, table key, kind)
    failures: list = field(default_factory=list)

    def check(self, ok: bool, name: str, detail: str = ""):
        if not ok:
            self.failures.append({"check": name, "detail": detail})


def resolve_threads(threads=None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("MLMC_OPT_THREADS")
    return max(1, int(env)) if env else 1


def _mapper(threads: int):
    """Order-preserving map; results stay keyed by input position."""
    if threads <= 1:
        return map, None
    pool = ThreadPoolExecutor(max_workers=threads)
    return pool.map, pool


def _meta(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed, "version": __version__}


def run_moments(cfg: ExperimentConfig) -> Outcome:
    p = cfg.problem
    if p["id"] != "ar1":
        raise ValueError(f"moments: unknown problem {p['id']!r}")
    fx = AR1Fixture(p["rho"], p["scale"], p["x0"], p["clip"])
    mapper, pool = _mapper(cfg.threads)
    try:
        rep = ar1_moment_study(cfg.mlmc["T_grid"], cfg.replicates, cfg.seed, fx,
                               LevelDistribution.geometric(cfg.mlmc["q"]), mapper=mapper)
    finally:
        if pool:
            pool.shutdown()
    table = ResultTable(["T", "bias_norm", "bias_se", "m2", "m2_se", "m3", "m3_se"],
                        list(rep.rows()), _meta(cfg))
    out = Outcome("moments", table, plots=[("bias_vs_T.svg", "moments.csv", "bias_vs_T")])
    out.check(all(np.isfinite(v).all() for v in (rep.bias_norm, rep.m2, rep.m3)),
              "finite_moments", "non-finite moment estimate")
    return out


def _make_problem(p: dict):
    if p["id"] == "gaussian_mean":
        return GaussianMeanProblem(p["d"], p["theta0"], p["x0"], p["sigma_p"], p["clip"])
    if p["id"] == "exact_quadratic":
        return ExactGradientProblem(np.full(p["d"], float(p["theta0"])))
    raise ValueError(f"optimize: unknown problem {p['id']!r}")


def run_optimize(cfg: ExperimentConfig) -> Outcome:
    N, R = cfg.iterations, cfg.replicates
    dist = LevelDistribution.geometric(cfg.mlmc["q"])
    sel = iterate_selector(cfg.schedule, cfg.optimizer, N)

    def one(r):
        problem = _make_problem(cfg.problem)
        recs = run_optimizer(problem, cfg.optimizer, cfg.schedule, N, make_stream(cfg.seed, r),
                             dist, allow_invalid_schedule=cfg.allow_invalid_schedule)
        pick = select_random_iterate(sel, make_stream(cfg.seed, R + r))
        return recs, pick

    mapper, pool = _mapper(cfg.threads)
    try:
        results = list(mapper(one, range(R)))
    finally:
        if pool:
            pool.shutdown()

    out = Outcome("optimize", ResultTable([], meta=_meta(cfg)))
    g2 = np.array([[rec.true_grad_sq_norm for rec in recs] for recs, _ in results], dtype=float)
    cost = np.array([[rec.cumulative_cost for rec in recs] for recs, _ in results], dtype=float)
    picks = [pick for _, pick in results]
    counts = np.bincount(picks, minlength=N + 1)

    header = ["n", "mean_cost", "mean_grad_sq_norm", "selected_count"]
    rows = [(n, cost[:, n].mean(), g2[:, n].mean(), int(counts[n])) for n in range(N + 1)]
    exp_R = np.array([sel.expectation(row) for row in g2])
    # summary row: n = -1 carries the expectation over the random iterate
    rows.append((-1, cost[:, -1].mean(), exp_R.mean(), R))
    out.table = ResultTable(header, rows, _meta(cfg))

    evals = [n for n in cfg.eval_N if n <= N]
    gtab = ResultTable(["N", "grad_sq_norm", "std_error", "rate_reference"], meta=_meta(cfg))
    for n in evals:
        sub = sel.truncated(n)
        vals = np.array([sub.expectation(row) for row in g2])
        se = float(vals.std(ddof=1) / math.sqrt(R)) if R > 1 else 0.0
        gtab.append((n, float(vals.mean()), se, float(rate_reference([n])[0])))
    out.extra["gradnorm_vs_N.csv"] = gtab
    if len(evals) >= 2:
        out.plots.append(("loglog_gradnorm.svg", "gradnorm_vs_N.csv", "loglog_gradnorm"))
    out.plots.append(("cost_axis.svg", "optimize.csv", "cost_axis"))

    for r, (recs, pick) in enumerate(results):
        t = ResultTable(["n", "cumulative_cost", "grad_sq_norm", "level", "chain_len", "selected"],
                        meta=_meta(cfg))
        for rec in recs:
            t.append((rec.n, rec.cumulative_cost, rec.true_grad_sq_norm,
                      -1 if rec.level is None else rec.level,
                      0 if rec.chain_len is None else rec.chain_len, int(rec.n == pick)))
        out.extra[f"replicate_{r}.csv"] = t
        lens = [rec.chain_len for rec in recs[1:]]
        out.check(all(c >= 1 for c in lens), "chain_len_positive", f"replicate {r}")
        out.check(bool(np.all(np.diff(cost[r]) >= 0)), "cost_non_decreasing", f"replicate {r}")
        out.check(all(np.all(np.isfinite(rec.theta)) for rec in recs), "finite_theta", f"replicate {r}")
    out.check(abs(sel.pmf.sum() - 1.0) <= 1e-12, "selector_normalized")
    return out


def run_iwae(cfg: ExperimentConfig) -> Outcome:
    p = cfg.problem
    if p["id"] != "linear_gaussian":
        raise ValueError(f"iwae: unknown problem {p['id']!r}")
    model = LinearGaussianModel(p["q_loc"], p["q_scale"])
    theta, y, k = float(p["theta"]), float(p["y"]), int(p["k"])
    exact = exact_marginal_grad_linear_gaussian(theta, y)
    dist = LevelDistribution.geometric(cfg.mlmc["q"])
    # T = 1 truncates every level, i.e. the plain IWAE estimator
    grid = [1] + [t for t in cfg.mlmc["T_grid"] if t != 1]

    def one(j):
        est, c = mlmc_iwae_batch(model, theta, y, k, grid[j], make_stream(cfg.seed, j),
                                 cfg.replicates, dist)
        return est, c

    mapper, pool = _mapper(cfg.threads)
    try:
        results = list(mapper(one, range(len(grid))))
    finally:
        if pool:
            pool.shutdown()
    table = ResultTable(["T", "bias", "bias_se", "bias_norm", "mean_cost"], meta=_meta(cfg))
    for T, (est, c) in zip(grid, results):
        norm, se = bias_from_samples(est, exact)
        table.append((T, float(est.mean() - exact), se, norm, float(c.mean())))
    out = Outcome("iwae", table, plots=[("bias_vs_T.svg", "iwae.csv", "bias_vs_T")])
    out.check(all(np.isfinite(r).all() for r in table.rows), "finite_bias")
    return out


def run_report(cfg: ExperimentConfig) -> Outcome:
    src = ResultTable.read(cfg.input)
    kind = cfg.plot
    if kind is None:
        kind = next((k for k, cols in PLOT_KINDS.items() if all(c in src.header for c in cols)), None)
        if kind is None:
            raise ValueError(f"{cfg.input}: no plot kind matches columns {src.header}")
    xcol, ycol = PLOT_KINDS[kind][0], PLOT_KINDS[kind][-1]
    keep = [r for r in src.rows if r[src.header.index(xcol)] > 0]
    sub = ResultTable(src.header, keep, src.meta)
    table = ResultTable(["points", "slope", "intercept", "r_squared"], meta=_meta(cfg))
    if len(keep) >= 3:
        fit = fit_loglog(sub.column(xcol), np.maximum(sub.column(ycol), 1e-300))
        table.append((len(keep), fit.slope, fit.intercept, fit.r_squared))
    out = Outcome("report", table, extra={"source.csv": sub},
                  plots=[(f"{kind}.svg", "source.csv", kind)])
    return out


DRIVERS = {"moments": run_moments, "optimize": run_optimize, "iwae": run_iwae, "report": run_report}


def run_experiment(cfg: ExperimentConfig) -> Outcome:
    return DRIVERS[cfg.experiment](cfg)


def write_outcome(out: Outcome, directory) -> list:
    """Write every table and plot under ``directory``; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    tables = {f"{out.name}.csv": out.table, **out.extra}
    paths = []
    for name, t in tables.items():
        if name == "source.csv":
            continue
        path = os.path.join(directory, name)
        t.write(path)
        paths.append(path)
    for fname, key, kind in out.plots:
        paths.append(emit_plot(tables[key], kind, os.path.join(directory, fname)))
    return paths
