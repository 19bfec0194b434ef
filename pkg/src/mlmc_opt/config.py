"""Experiment configuration: strict JSON loading, defaults and validation."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

from .optim import OptimizerConfig, ScheduleSpec, validate_schedule

EXPERIMENTS = ("moments", "optimize", "iwae", "report")

_PROBLEM_DEFAULTS = {
    "moments": {"id": "ar1", "rho": 0.5, "scale": math.sqrt(0.75), "x0": 2.0, "clip": 10.0},
    "optimize": {"id": "gaussian_mean", "d": 10, "theta0": 5.0, "x0": 0.0,
                 "sigma_p": None, "clip": 10.0},
    "iwae": {"id": "linear_gaussian", "theta": 0.0, "y": 3.0, "q_loc": 0.0,
             "q_scale": 1.5, "k": 5},
    "report": {},
}

_MLMC_DEFAULTS = {
    "moments": {"q": 0.5, "T_grid": [2**j for j in range(1, 10)]},
    "optimize": {"q": 0.5},
    "iwae": {"q": 0.5, "T_grid": [2, 8, 32, 64, 128]},
    "report": {},
}

_REPLICATES = {"moments": 100_000, "optimize": 5, "iwae": 100_000, "report": 1}

_SCHEDULE_DEFAULTS = {
    "C_gamma": 0.001, "gamma_exp": 0.5, "C_T": 1.0, "alpha_exp": 0.5,
    "C_eps": 1.0, "eps_exp": 0.0, "C_M": 1.0, "M_exp": 0.0,
}
_OPTIMIZER_DEFAULTS = {"kind": "amsgrad", "rho1": 0.9, "rho2": 0.999, "delta": 1e-8}

_TOP_KEYS = {"experiment", "seed", "replicates", "output", "allow_invalid_schedule",
             "threads", "problem", "schedule", "optimizer", "mlmc", "iterations",
             "eval_N", "input", "plot"}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}")
        out[k] = v
    return out


def parse_json(text: str) -> dict:
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object")
    return doc


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    replicates: int
    output: str
    allow_invalid_schedule: bool
    threads: int
    problem: dict
    schedule: ScheduleSpec
    optimizer: OptimizerConfig
    mlmc: dict
    iterations: int
    eval_N: list
    input: str | None = None
    plot: str | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def config_hash(self) -> str:
        """Digest of the resolved config; ``seed``, ``output`` and ``threads`` excluded."""
        doc = {k: v for k, v in self.raw.items() if k not in ("seed", "output", "threads")}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, replicates=None, output=None, threads=None):
        raw = copy.deepcopy(self.raw)
        for key, val in (("seed", seed), ("replicates", replicates),
                         ("output", output), ("threads", threads)):
            if val is not None:
                raw[key] = val
        return build_config(raw)


def _merge(section: str, given, defaults: dict, problems: list) -> dict:
    if given is None:
        return dict(defaults)
    if not isinstance(given, dict):
        problems.append(f"{section}: expected an object")
        return dict(defaults)
    out = dict(defaults)
    for k, v in given.items():
        if k not in defaults:
            problems.append(f"unknown key {section}.{k}")
        else:
            out[k] = v
    return out


def build_config(doc: dict) -> ExperimentConfig:
    problems = []
    for k in doc:
        if k not in _TOP_KEYS:
            problems.append(f"unknown key {k}")
    exp = doc.get("experiment")
    if exp is None:
        raise ConfigError(problems + ["missing required key experiment"])
    if exp not in EXPERIMENTS:
        raise ConfigError(problems + [f"experiment: must be one of {', '.join(EXPERIMENTS)}"])

    prob = _merge("problem", doc.get("problem"), _PROBLEM_DEFAULTS[exp], problems)
    mlmc = _merge("mlmc", doc.get("mlmc"), _MLMC_DEFAULTS[exp], problems)
    sched_d = _merge("schedule", doc.get("schedule"), _SCHEDULE_DEFAULTS, problems)
    opt_d = _merge("optimizer", doc.get("optimizer"), _OPTIMIZER_DEFAULTS, problems)

    seed = doc.get("seed", 0)
    if not (isinstance(seed, int) and 0 <= seed < 2**64):
        problems.append("seed: must be an unsigned 64-bit integer")
    replicates = doc.get("replicates", _REPLICATES[exp])
    if not (isinstance(replicates, int) and replicates >= 1):
        problems.append("replicates: must be a positive integer")
    threads = doc.get("threads", 1)
    if not (isinstance(threads, int) and threads >= 1):
        problems.append("threads: must be a positive integer")
    iterations = doc.get("iterations", 10_000)
    if not (isinstance(iterations, int) and iterations >= 0):
        problems.append("iterations: must be a non-negative integer")
    eval_N = doc.get("eval_N", [100, 1000, 10_000])
    if not (isinstance(eval_N, list) and all(isinstance(n, int) and n >= 2 for n in eval_N)):
        problems.append("eval_N: must be a list of integers >= 2")
    if exp == "report" and "input" not in doc:
        problems.append("missing required key input")
    if exp in ("moments", "iwae"):
        grid = mlmc.get("T_grid")
        if not (isinstance(grid, list) and len(grid) >= 1 and all(
                isinstance(t, (int, float)) and t >= 1 for t in grid)):
            problems.append("mlmc.T_grid: must be a non-empty list of numbers >= 1")
    if not (isinstance(mlmc.get("q", 0.5), (int, float)) and 0 < mlmc.get("q", 0.5) < 1):
        problems.append("mlmc.q: must lie in (0, 1)")

    try:
        sched = ScheduleSpec(**{k: float(v) for k, v in sched_d.items()})
    except (TypeError, ValueError):
        problems.append("schedule: entries must be numbers")
        sched = ScheduleSpec()
    try:
        opt = OptimizerConfig(str(opt_d["kind"]), float(opt_d["rho1"]),
                              float(opt_d["rho2"]), float(opt_d["delta"]))
    except (TypeError, ValueError) as exc:
        problems.append(f"optimizer: {exc}")
        opt = OptimizerConfig()
    allow = bool(doc.get("allow_invalid_schedule", False))
    if exp == "optimize" and not allow:
        problems.extend(f"schedule: {v}" for v in validate_schedule(sched, opt.kind))
    if problems:
        raise ConfigError(problems)

    raw = dict(doc)
    raw.update(problem=prob, mlmc=mlmc, schedule=sched_d, optimizer=opt_d, seed=seed,
               replicates=replicates, iterations=iterations, eval_N=eval_N)
    return ExperimentConfig(
        experiment=exp, seed=seed, replicates=replicates,
        output=str(doc.get("output", "results")), allow_invalid_schedule=allow,
        threads=threads, problem=prob, schedule=sched, optimizer=opt, mlmc=mlmc,
        iterations=iterations, eval_N=eval_N, input=doc.get("input"),
        plot=doc.get("plot"), raw=raw,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return build_config(parse_json(fh.read()))
