"""Step schedules, diagonal preconditioners and the MLMC optimization loop.

Index conventions follow the loop ``for n in 0..N-1``: iteration ``n``
samples level ``K_{n+1}``, runs a fresh chain under ``theta_n`` with
truncation ``T_{n+1}``, updates the preconditioner with ``eps_{n+1}`` and
``M_n``, then sets ``theta_{n+1} = theta_n - gamma_{n+1} A_n d_n`` where
``d_n`` is the estimate (Adagrad, identity) or the first-moment EMA
(AMSGrad).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import RngStream, RunRecord, as_param_vector
from .mlmc import GEOMETRIC_HALF, LevelDistribution, LevelDraw, combine, sample_level, tau


class ScheduleError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class OptimizerError(RuntimeError):
    """Failure inside an iteration; carries the iteration index."""

    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {cause}")


@dataclass(frozen=True)
class ScheduleSpec:
    """Power schedules indexed by ``n >= 1``.

    ``gamma_n = C_gamma n^-gamma_exp``, ``T_n = max(2, ceil(C_T n^alpha_exp))``,
    ``eps_n = C_eps n^eps_exp`` and ``M_{n-1} = C_M n^M_exp``.
    """

    C_gamma: float = 0.001
    gamma_exp: float = 0.5
    C_T: float = 1.0
    alpha_exp: float = 0.5
    C_eps: float = 1.0
    eps_exp: float = 0.0
    C_M: float = 1.0
    M_exp: float = 0.0

    def gamma(self, n: int) -> float:
        return self.C_gamma * n ** (-self.gamma_exp)

    def T(self, n: int) -> int:
        # the small slack absorbs float noise in e.g. 16**0.5
        return max(2, math.ceil(self.C_T * n**self.alpha_exp - 1e-9))

    def eps(self, n: int) -> float:
        return self.C_eps * n**self.eps_exp

    def M(self, n: int) -> float:
        """Clipping threshold ``M_n`` (so ``M(n-1) = C_M n^M_exp``)."""
        return self.C_M * (n + 1) ** self.M_exp


def schedule_eval(spec: ScheduleSpec, n: int):
    """``(gamma_n, T_n, eps_n, M_{n-1})`` for ``n >= 1``."""
    if n < 1:
        raise ValueError("schedules are indexed from n = 1")
    return spec.gamma(n), spec.T(n), spec.eps(n), spec.M(n - 1)


@dataclass(frozen=True)
class Violation:
    condition: str
    detail: str

    def __str__(self):
        return f"{self.condition} violated: {self.detail}"


def validate_schedule(spec: ScheduleSpec, optimizer: str = "amsgrad",
                      lam_low_exp: float = 0.0, lam_high_exp: float = 0.0) -> list:
    """All violated rate conditions; an empty list means the schedule is admissible.

    ``optimizer`` is ``"generic"`` (spectral bounds growing like
    ``n^lam_low_exp`` / ``n^lam_high_exp``), ``"adagrad"``, ``"amsgrad"`` or
    ``"identity"`` (treated as generic with constant bounds).
    """
    out = []
    for name in ("C_gamma", "C_T", "C_eps", "C_M"):
        if not getattr(spec, name) > 0:
            out.append(Violation(f"{name} > 0", f"{name}={getattr(spec, name)}"))
    if not spec.alpha_exp > 0:
        out.append(Violation("alpha > 0", f"alpha={spec.alpha_exp}"))
    for name, label in (("gamma_exp", "gamma_n non-increasing (gamma >= 0)"),
                        ("eps_exp", "eps_n non-decreasing (eps_exp >= 0)"),
                        ("M_exp", "M >= 0")):
        if getattr(spec, name) < 0:
            out.append(Violation(label, f"{name}={getattr(spec, name)}"))
    g = spec.gamma_exp
    if optimizer in ("generic", "identity"):
        lo = lam_low_exp if optimizer == "generic" else 0.0
        if not g + lo < 1:
            out.append(Violation("gamma + lambda_low < 1", f"{g} + {lo} = {g + lo}"))
    elif optimizer == "adagrad":
        if not g + spec.M_exp < 1 + spec.eps_exp:
            out.append(Violation(
                "gamma + M < 1 + eps_exp",
                f"{g} + {spec.M_exp} = {g + spec.M_exp} >= {1 + spec.eps_exp}"))
    elif optimizer == "amsgrad":
        val = 2 * g + spec.eps_exp
        if not val < 2:
            out.append(Violation("2*gamma + eps_exp < 2", f"2*{g} + {spec.eps_exp} = {val}"))
    else:
        raise ValueError(f"unknown optimizer {optimizer!r}")
    return out


@dataclass
class AdagradState:
    accum: np.ndarray
    count: int = 0

    @classmethod
    def fresh(cls, d: int) -> "AdagradState":
        return cls(np.zeros(d), 0)


def adagrad_update(state: AdagradState, estimate, eps_np1: float, M_n: float):
    """Add the clipped squared estimate; return ``(A_diag, new_state)``."""
    if not (eps_np1 > 0 and M_n > 0):
        raise ValueError("eps and M must be positive")
    est = np.asarray(estimate, dtype=float)
    accum = state.accum + np.minimum(est * est, M_n * M_n)
    count = state.count + 1
    A = (eps_np1**-2 + accum / count) ** -0.5
    return A, AdagradState(accum, count)


def adagrad_auxiliary(state: AdagradState, eps_np1: float) -> np.ndarray:
    """Diagonal of the matrix that leaves out the newest estimate.

    For the state holding ``n`` past terms this is
    ``(eps_{n+1}^-2 + accum / (n + 1))^-1/2``; with ``n = 0`` it is ``eps_1``.
    Its smallest entry is bounded below by ``adagrad_lower_eps(n, ...)``.
    """
    return (eps_np1**-2 + state.accum / (state.count + 1)) ** -0.5


def adagrad_lower_eps(n: int, eps_np1: float, sup_M_sq: float) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return eps_np1
    return (eps_np1**-2 + sup_M_sq) ** -0.5


@dataclass
class AmsgradState:
    m: np.ndarray
    W: np.ndarray
    W_hat: np.ndarray
    rho1: float = 0.9
    rho2: float = 0.999
    delta: float = 1e-8
    count: int = 0
    last_eps: float = 0.0

    @classmethod
    def fresh(cls, d: int, rho1=0.9, rho2=0.999, delta=1e-8) -> "AmsgradState":
        if not (0 <= rho1 < 1 and 0 <= rho2 < 1):
            raise ValueError("rho1, rho2 must lie in [0, 1)")
        if not delta > 0:
            raise ValueError("delta must be positive")
        return cls(np.zeros(d), np.zeros(d), np.zeros(d), rho1, rho2, delta)


def amsgrad_update(state: AmsgradState, estimate, eps_np1: float):
    """One AMSGrad moment update; returns ``(A_diag, m, new_state)``.

    The step applied to ``theta`` is ``gamma * A_diag * m``.
    """
    if eps_np1 < state.last_eps:
        raise ValueError("eps sequence must be non-decreasing")
    est = np.asarray(estimate, dtype=float)
    m = state.rho1 * state.m + (1 - state.rho1) * est
    W = state.rho2 * state.W + (1 - state.rho2) * np.minimum(eps_np1, est * est)
    W_hat = np.maximum(state.W_hat, W)
    A = (state.delta + W_hat) ** -0.5
    new = AmsgradState(m, W, W_hat, state.rho1, state.rho2, state.delta,
                       state.count + 1, eps_np1)
    return A, m, new


def amsgrad_lower_eps(n: int, delta: float, eps_n: float, rho2: float) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 0.0
    return 1.0 / math.sqrt(delta + eps_n * (1 - rho2**n))


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "amsgrad"  # "amsgrad" | "adagrad" | "identity"
    rho1: float = 0.9
    rho2: float = 0.999
    delta: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("amsgrad", "adagrad", "identity"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


@dataclass
class IterateSelector:
    """Law of the randomized output index ``R`` on ``{0..N}``."""

    weights: np.ndarray
    varpi: float = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a non-empty vector of finite non-negative numbers")
        self.weights = w
        self.varpi = float(w.sum())
        if not self.varpi > 0:
            raise ValueError("weights sum to zero")

    @property
    def N(self) -> int:
        return len(self.weights) - 1

    @property
    def pmf(self) -> np.ndarray:
        return self.weights / self.varpi

    def sample(self, stream: RngStream, size=None):
        cdf = np.cumsum(self.pmf)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, stream.random(size), side="right")
        return np.minimum(idx, self.N)

    def expectation(self, values) -> float:
        """``E[values[R]]`` for per-iterate values ``values[0..N]``."""
        values = np.asarray(values, dtype=float)[: self.N + 1]
        return float(np.dot(self.pmf, values))

    def truncated(self, N: int) -> "IterateSelector":
        """Selector for the shorter horizon ``N`` (same schedules)."""
        return IterateSelector(self.weights[: N + 1])


def select_random_iterate(sel: IterateSelector, stream: RngStream) -> int:
    return int(sel.sample(stream))


def selector_lambdas(spec: ScheduleSpec, cfg: OptimizerConfig, N: int,
                     lam_low: Optional[Sequence[float]] = None) -> np.ndarray:
    """``lambda_{n+1}`` for ``n = 0..N`` matching the optimizer's rate bound.

    Adagrad and AMSGrad use the shifted lower sequence ``lambda_{n+1} =
    eps_low_n``; the identity preconditioner uses ``lambda = 1`` unless
    ``lam_low`` (values ``lambda_1..lambda_{N+1}``) is given.
    """
    if lam_low is not None:
        lam = np.asarray(lam_low, dtype=float)
        if lam.shape != (N + 1,):
            raise ValueError("lam_low must have N + 1 entries")
        return lam
    if cfg.kind == "identity":
        return np.ones(N + 1)
    out = np.empty(N + 1)
    if cfg.kind == "adagrad":
        sup_m2 = 0.0
        for n in range(N + 1):
            out[n] = adagrad_lower_eps(n, spec.eps(n + 1), sup_m2)
            sup_m2 = max(sup_m2, spec.M(n) ** 2)
    else:
        for n in range(N + 1):
            eps_n = spec.eps(n) if n >= 1 else 0.0
            out[n] = amsgrad_lower_eps(n, cfg.delta, eps_n, cfg.rho2)
    return out


def iterate_selector(spec: ScheduleSpec, cfg: OptimizerConfig, N: int,
                     lam_low: Optional[Sequence[float]] = None) -> IterateSelector:
    gam = np.array([spec.gamma(n + 1) for n in range(N + 1)])
    return IterateSelector(gam * selector_lambdas(spec, cfg, N, lam_low))


def run_optimizer(problem, cfg: OptimizerConfig, spec: ScheduleSpec, N: int,
                  stream: RngStream, dist: LevelDistribution = GEOMETRIC_HALF,
                  allow_invalid_schedule: bool = False, trace: Optional[list] = None):
    """Run ``N`` MLMC iterations; returns ``N + 1`` run records.

    ``problem`` supplies ``theta0``, ``grad_fn`` (a ``GradFn``),
    ``sample_chain(theta, length, stream)`` and optionally
    ``true_grad(theta)``. When ``trace`` is a list, the preconditioner
    diagonal of every iteration is appended to it.
    """
    if not allow_invalid_schedule:
        bad = validate_schedule(spec, cfg.kind)
        if bad:
            raise ScheduleError(bad)
    theta = as_param_vector(problem.theta0)
    d = theta.size
    oracle = getattr(problem, "true_grad", None)

    def sq_norm(th):
        if oracle is None:
            return None
        g = np.asarray(oracle(th), dtype=float)
        return float(np.dot(g, g))

    records = [RunRecord(0, theta.copy(), None, None, None, 0, sq_norm(theta))]
    ada = AdagradState.fresh(d)
    ams = AmsgradState.fresh(d, cfg.rho1, cfg.rho2, cfg.delta)
    cost = 0
    for n in range(N):
        try:
            gamma, T, eps, _ = schedule_eval(spec, n + 1)
            draw = sample_level(dist, stream)
            used = draw.chain_length(T)
            states = problem.sample_chain(theta, used, stream)
            h_values = problem.grad_fn.values(theta, states)
            live = math.floor(draw.tau_K) <= T
            est = combine(h_values, draw.tau_K, tau(dist, draw.K - 1), live)
            if cfg.kind == "adagrad":
                A, ada = adagrad_update(ada, est, eps, spec.M(n))
                direction = est
            elif cfg.kind == "amsgrad":
                A, direction, ams = amsgrad_update(ams, est, eps)
            else:
                A, direction = np.ones(d), est
            theta = theta - gamma * A * direction
            if not np.all(np.isfinite(theta)):
                raise FloatingPointError("non-finite parameter")
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise OptimizerError(n, exc) from exc
        if trace is not None:
            trace.append(A)
        cost += used
        records.append(RunRecord(n + 1, theta.copy(), est, draw.K, used, cost, sq_norm(theta)))
    return records


__all__ = [
    "AdagradState", "AmsgradState", "IterateSelector", "LevelDraw", "OptimizerConfig",
    "OptimizerError", "ScheduleError", "ScheduleSpec", "Violation", "adagrad_auxiliary",
    "adagrad_lower_eps", "adagrad_update", "amsgrad_lower_eps", "amsgrad_update",
    "iterate_selector", "run_optimizer", "schedule_eval", "select_random_iterate",
    "selector_lambdas", "validate_schedule",
]
