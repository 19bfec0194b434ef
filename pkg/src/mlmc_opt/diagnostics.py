"""Bias and moment measurement, slope fits, rate functions and bound constants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .core import RngStream, make_stream
from .mlmc import GEOMETRIC_HALF, LevelDistribution

Sampler = Callable[[RngStream, int], np.ndarray]  # (stream, n) -> (n, d)


def _draw(make_estimate: Sampler, stream: RngStream, replicates: int) -> np.ndarray:
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    x = np.asarray(make_estimate(stream, replicates), dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != replicates:
        raise ValueError(f"sampler returned {x.shape[0]} rows, expected {replicates}")
    return x


def bias_from_samples(x: np.ndarray, oracle) -> tuple:
    """Norm of ``mean(x) - oracle`` with a jackknife standard error."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    oracle = np.broadcast_to(np.asarray(oracle, dtype=float), x.shape[1:])
    total = x.sum(axis=0)
    bias = float(np.linalg.norm(total / n - oracle))
    loo = np.linalg.norm((total - x) / (n - 1) - oracle, axis=1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return bias, se


def moment_from_samples(x: np.ndarray, p: float) -> tuple:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    v = np.linalg.norm(x, axis=1) ** p
    # the jackknife of a plain mean is the usual standard error
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def estimate_bias(make_estimate: Sampler, oracle_grad, replicates: int, stream: RngStream):
    """``(|mean - oracle|, jackknife std error)`` over ``replicates`` estimates."""
    return bias_from_samples(_draw(make_estimate, stream, replicates), oracle_grad)


def estimate_moment(make_estimate: Sampler, p: int, replicates: int, stream: RngStream):
    """``(mean |estimate|^p, std error)``."""
    if p not in (2, 3):
        raise ValueError("p must be 2 or 3")
    return moment_from_samples(_draw(make_estimate, stream, replicates), p)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def fit_linear(xs, ys) -> SlopeFit:
    """Ordinary least squares ``y = slope * x + intercept``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 3:
        raise ValueError("need at least 3 paired points")
    res = stats.linregress(xs, ys)
    return SlopeFit(float(res.slope), float(res.intercept), float(res.rvalue**2))


def fit_loglog(xs, ys) -> SlopeFit:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log fit needs strictly positive coordinates")
    return fit_linear(np.log(xs), np.log(ys))


def psi(N: int, eta: float) -> float:
    if N < 2:
        raise ValueError("N must be >= 2")
    if eta < 1:
        return N ** (1.0 - eta)
    if eta == 1:
        return math.log(N)
    return 1.0


def phi(N: int, eta: float) -> float:
    if N < 2:
        raise ValueError("N must be >= 2")
    if eta < 1:
        return N ** (1.0 - eta) * math.log(N)
    if eta == 1:
        return math.log(N) ** 2
    return 1.0


def rate_reference(N_grid) -> np.ndarray:
    """``(log N)^2 / sqrt(N)`` per entry."""
    N = np.asarray(N_grid, dtype=float)
    if np.any(N < 2):
        raise ValueError("grid entries must be >= 2")
    return np.log(N) ** 2 / np.sqrt(N)


@dataclass(frozen=True)
class AmsgradConstants:
    b0: float
    b1: float
    b2: float
    b3: float
    b4: float
    b0_tilde: float


def amsgrad_constants(c1, c2, G, L, delta, rho1, d, gamma1, T1, eps0=0.0) -> AmsgradConstants:
    """Constants of the AMSGrad convergence bound.

    ``eps0`` is the first element of the lower preconditioner sequence and
    only enters ``b0``. ``T1`` is the first truncation level (``log`` is
    natural).
    """
    if not 0 <= rho1 < 1:
        raise ValueError("rho1 must lie in [0, 1)")
    for name, v in (("c1", c1), ("c2", c2), ("G", G), ("L", L), ("delta", delta),
                    ("d", d), ("gamma1", gamma1), ("T1", T1)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    lt = math.log(T1)
    b0t = (d * G / (2 * delta * (1 - rho1))
           + gamma1 * math.sqrt(d / delta) * (1 + 2 * lt / math.log(2)) * G**2
           + c2 * (L / delta) * G**2 * gamma1**2 * lt)
    b1 = c1 * G**2 / math.sqrt(delta)
    b2 = c2 / (2 * delta) * (1 + 2 * L + 2 * delta * G) * G**2
    # rho1 multiplied through so rho1 = 0 is well defined
    b3 = (c2 / (2 * delta * (1 - rho1))
          * (rho1**2 * (L**2 + 2 * L) + rho1 * delta * (1 - rho1) * G) * G**2)
    b4 = d * rho1 * G / (2 * delta * (1 - rho1))
    return AmsgradConstants(b0t + eps0 * gamma1 * G**2, b1, b2, b3, b4, b0t)


@dataclass(frozen=True)
class MomentReport:
    T_grid: tuple
    bias_norm: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    replicates: int
    std_errors: dict  # column name -> array

    def rows(self):
        se = self.std_errors
        for i, T in enumerate(self.T_grid):
            yield (T, self.bias_norm[i], se["bias_norm"][i], self.m2[i], se["m2"][i],
                   self.m3[i], se["m3"][i])


def moment_study(sampler: Callable[[float, RngStream, int], np.ndarray], oracle,
                 T_grid: Sequence[float], replicates: int, seed: int,
                 mapper=map) -> MomentReport:
    """Bias and second/third moments of ``sampler(T, stream, n)`` over ``T_grid``.

    Grid point ``j`` draws its replicates from stream ``(seed, j)``, so
    ``mapper`` may evaluate grid points in any order or concurrently.
    """
    if replicates < 1000:
        raise ValueError("moment studies need at least 1000 replicates")
    T_grid = tuple(T_grid)
    b, m2, m3 = [], [], []
    sb, s2, s3 = [], [], []

    def one(j):
        return np.asarray(sampler(T_grid[j], make_stream(seed, j), replicates), dtype=float)

    for x in mapper(one, range(len(T_grid))):
        bias, se = bias_from_samples(x, oracle)
        v2, e2 = moment_from_samples(x, 2)
        v3, e3 = moment_from_samples(x, 3)
        b.append(bias), sb.append(se), m2.append(v2), s2.append(e2), m3.append(v3), s3.append(e3)
    arr = np.asarray
    return MomentReport(tuple(T_grid), arr(b), arr(m2), arr(m3), replicates,
                        {"bias_norm": arr(sb), "m2": arr(s2), "m3": arr(s3)})


def ar1_moment_study(T_grid=tuple(2**j for j in range(1, 10)), replicates=100_000, seed=0,
                     fixture=None, dist: LevelDistribution = GEOMETRIC_HALF, backend=None,
                     mapper=map) -> MomentReport:
    from .problems import AR1Fixture

    fx = AR1Fixture() if fixture is None else fixture
    return moment_study(lambda T, s, n: fx.mlmc_batch(T, s, n, dist, backend),
                        fx.oracle, T_grid, replicates, seed, mapper)
