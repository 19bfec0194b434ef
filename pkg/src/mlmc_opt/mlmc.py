"""Multilevel estimator machinery.

Level distribution and spans, the truncation index, partial means, the
randomized telescoping estimate and its exact expected cost.

The estimate at level ``K`` with truncation ``T`` is::

    H(X_1) + tau(K) * (mean_{tau(K)} - mean_{tau(K-1)}) * [floor(tau(K)) <= T]

where ``mean_r`` averages ``H`` over the first ``floor(r)`` chain states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .core import RngStream


class LevelDomainError(ValueError):
    """Level outside the support of the level distribution."""


class TruncationConfigError(ValueError):
    """Truncation below the smallest admissible span."""


class ChainLengthError(ValueError):
    """Not enough chain states (or values) for the requested mean."""


@dataclass(frozen=True)
class LevelDistribution:
    """Geometric(q) on {1, 2, ...}, or a finite non-increasing pmf on {1..m}."""

    q: float = 0.5
    pmf: Optional[tuple] = None

    def __post_init__(self):
        if self.pmf is None:
            if not 0.0 < self.q < 1.0:
                raise ValueError("geometric parameter must lie in (0, 1)")
            return
        pmf = tuple(float(p) for p in self.pmf)
        if not pmf or any(p <= 0 for p in pmf):
            raise ValueError("pmf entries must be positive")
        if any(b > a for a, b in zip(pmf, pmf[1:])):
            raise ValueError("pmf must be non-increasing in k")
        if abs(math.fsum(pmf) - 1.0) > 1e-12:
            raise ValueError("pmf must sum to 1")
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def geometric(cls, q: float = 0.5) -> "LevelDistribution":
        return cls(q=q)

    @classmethod
    def finite(cls, pmf: Sequence[float]) -> "LevelDistribution":
        return cls(pmf=tuple(pmf))

    @property
    def is_geometric(self) -> bool:
        return self.pmf is None

    @property
    def support_max(self) -> Optional[int]:
        return None if self.pmf is None else len(self.pmf)

    def mu(self, k: int) -> float:
        if k < 1 or (self.pmf is not None and k > len(self.pmf)):
            raise LevelDomainError(f"level {k} outside support")
        if self.pmf is None:
            return (1.0 - self.q) ** (k - 1) * self.q
        return self.pmf[k - 1]


GEOMETRIC_HALF = LevelDistribution.geometric(0.5)


@dataclass(frozen=True)
class LevelDraw:
    K: int
    tau_K: float
    truncated: Optional[bool] = None

    def against(self, T: float) -> "LevelDraw":
        """Copy with the truncation flag set for truncation ``T``."""
        return replace(self, truncated=math.floor(self.tau_K) > T)

    def chain_length(self, T: float) -> int:
        """States the estimate consumes: ``floor(tau(K))`` or 1 when truncated."""
        span = math.floor(self.tau_K)
        return span if span <= T else 1


class GradFn:
    """Update function ``H_theta(x)`` clipped entrywise to ``[-G, G]``."""

    def __init__(self, fn: Callable, bound: float):
        if not bound > 0:
            raise ValueError("bound G must be positive")
        self.fn = fn
        self.bound = float(bound)

    def __call__(self, theta, x) -> np.ndarray:
        out = np.atleast_1d(np.asarray(self.fn(theta, x), dtype=float))
        return np.clip(out, -self.bound, self.bound)

    def values(self, theta, states) -> np.ndarray:
        """Stack ``H_theta`` over a sequence of states, shape ``(len, d)``."""
        return np.stack([self(theta, x) for x in states])


def tau(dist: LevelDistribution, k: int) -> float:
    if k < 0:
        raise LevelDomainError("level must be non-negative")
    if k == 0:
        return max(1.0, 1.0 / (2.0 * dist.mu(1)))
    return 1.0 / dist.mu(k)


def max_level(dist: LevelDistribution, T: float) -> int:
    """Largest ``k`` with ``floor(tau(k)) <= T``."""
    if T < math.floor(tau(dist, 1)):
        raise TruncationConfigError(
            f"truncation T={T} below floor(tau(1))={math.floor(tau(dist, 1))}"
        )
    k = 1
    top = dist.support_max
    while (top is None or k < top) and math.floor(tau(dist, k + 1)) <= T:
        k += 1
    return k


def sample_level(dist: LevelDistribution, stream: RngStream) -> LevelDraw:
    K = int(sample_levels(dist, stream, 1)[0])
    return LevelDraw(K, tau(dist, K))


def sample_levels(dist: LevelDistribution, stream: RngStream, n: int) -> np.ndarray:
    """``n`` i.i.d. levels as an int64 array."""
    if dist.is_geometric:
        return np.asarray(stream.geometric(dist.q, n), dtype=np.int64)
    cdf = np.cumsum(dist.pmf)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, stream.random(n), side="right").astype(np.int64) + 1


def level_layout(dist: LevelDistribution, levels: np.ndarray, T: float):
    """Per-draw chain length, half length and correction weight.

    Returns integer arrays ``length = floor(tau(K))`` (1 when truncated),
    ``half = floor(tau(K-1))`` (1 when truncated) and the float array
    ``weight = tau(K)`` (0 when truncated). This is the layout consumed by
    the batch kernels.
    """
    levels = np.asarray(levels, dtype=np.int64)
    uniq = np.unique(levels)
    spans = {int(k): tau(dist, int(k)) for k in uniq}
    prev = {int(k): tau(dist, int(k) - 1) for k in uniq}
    span = np.array([spans[int(k)] for k in levels], dtype=float)
    span_prev = np.array([prev[int(k)] for k in levels], dtype=float)
    full = np.floor(span)
    live = full <= T
    length = np.where(live, full, 1).astype(np.int64)
    half = np.where(live, np.floor(span_prev), 1).astype(np.int64)
    weight = np.where(live, span, 0.0)
    return length, half, weight


def partial_mean(values, r: float) -> np.ndarray:
    """Mean of the first ``floor(r)`` entries of ``values``."""
    if r < 1:
        raise ValueError("r must be >= 1")
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    m = math.floor(r)
    if len(vals) < m:
        raise ChainLengthError(f"need {m} values, got {len(vals)}")
    return vals[:m].sum(axis=0) / m


def combine(h_values: np.ndarray, tau_K: float, tau_prev: float, live: bool) -> np.ndarray:
    """Telescoping combination on precomputed ``H`` values.

    The correction is evaluated as ``tau/m * (S_tail - S_head * (m - h) / h)``
    with ``m = floor(tau_K)``, ``h = floor(tau_prev)`` and ``S_head``,
    ``S_tail`` the sums over the first ``h`` and the next ``m - h`` values.
    This equals ``tau * (mean_m - mean_h)`` and for dyadic spans vanishes
    exactly on a constant chain.
    """
    h_values = np.asarray(h_values, dtype=float)
    if h_values.ndim == 1:
        h_values = h_values[:, None]
    base = h_values[0].copy()
    if not live:
        return base
    m, h = math.floor(tau_K), math.floor(tau_prev)
    if len(h_values) < m:
        raise ChainLengthError(f"need {m} values, got {len(h_values)}")
    head = h_values[:h].sum(axis=0)
    tail = h_values[h:m].sum(axis=0)
    scale = (m - h) / h
    return base + (tau_K / m) * (tail - (head if scale == 1.0 else head * scale))


def mlmc_estimate(
    grad: GradFn,
    theta,
    chain,
    draw: LevelDraw,
    T: float,
    dist: LevelDistribution = GEOMETRIC_HALF,
):
    """MLMC estimate from a materialized chain prefix.

    Returns ``(estimate, used_len)``; only the first ``used_len`` states of
    ``chain`` are evaluated.
    """
    tau_prev = tau(dist, draw.K - 1)
    if not tau_prev < draw.tau_K:
        raise ValueError("level spans must be strictly increasing")
    used = draw.chain_length(T)
    if len(chain) < used:
        raise ChainLengthError(f"chain has {len(chain)} states, need {used}")
    h_values = grad.values(theta, chain[:used])
    return combine(h_values, draw.tau_K, tau_prev, math.floor(draw.tau_K) <= T), used


def mixture_mean(
    grad: GradFn,
    theta,
    chain,
    dist: LevelDistribution,
    T: float,
) -> np.ndarray:
    """Average of the estimate over the level law, for one fixed chain.

    By telescoping this equals the plain mean of ``H`` over the first
    ``floor(tau(k_max))`` states.
    """
    k_max = max_level(dist, T)
    need = math.floor(tau(dist, k_max))
    if len(chain) < need:
        raise ChainLengthError(f"chain has {len(chain)} states, need {need}")
    h_values = grad.values(theta, chain[:need])
    base = h_values[0]
    total = np.zeros_like(base)
    mass = 0.0
    for k in range(1, k_max + 1):
        w = dist.mu(k)
        mass += w
        total += w * combine(h_values, tau(dist, k), tau(dist, k - 1), True)
    return total + (1.0 - mass) * base


def expected_cost(dist: LevelDistribution, T: float) -> float:
    """Exact expected number of chain states consumed by one estimate."""
    k_max = max_level(dist, T)
    cost = 0.0
    mass = 0.0
    for k in range(1, k_max + 1):
        w = dist.mu(k)
        mass += w
        cost += w * math.floor(tau(dist, k))
    return cost + (1.0 - mass)
