"""Importance-weighted gradients for latent-variable models.

Plain self-normalized (IWAE) gradients, the sampling-importance-resampling
chain and its multilevel estimator, plus a linear-Gaussian fixture whose
marginal likelihood and gradient are available in closed form.

Model callables are vectorized over the leading particle axis: ``log_joint``
and ``log_q`` map ``z[k]`` to ``real[k]`` and ``grad_theta_log_joint`` maps
``z[k]`` to ``real[k, d]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from . import _backend
from .core import RngStream
from .mlmc import GEOMETRIC_HALF, LevelDistribution, combine, level_layout, sample_level, sample_levels, tau

_LOG_2PI = math.log(2.0 * math.pi)


class DegenerateWeightsError(ValueError):
    """Every importance weight is zero (all log-weights are -inf or nan)."""


@dataclass(frozen=True)
class LatentModelSpec:
    log_joint: Callable            # (theta, y, z[k]) -> real[k]
    grad_theta_log_joint: Callable  # (theta, y, z[k]) -> real[k, d]
    q_sampler: Callable            # (y, stream, n) -> z[n]
    log_q: Callable                # (y, z[k]) -> real[k]
    exact_marginal_grad: Optional[Callable] = None

    def log_weights(self, theta, y, z) -> np.ndarray:
        return np.asarray(self.log_joint(theta, y, z), dtype=float) - np.asarray(self.log_q(y, z), dtype=float)


class LinearGaussianModel(LatentModelSpec):
    """``z ~ N(0, 1)``, ``y | z ~ N(theta + z, 1)`` with proposal ``N(q_loc, q_scale^2)``.

    The marginal is ``y ~ N(theta, 2)`` and the posterior is
    ``N((y - theta) / 2, 1/2)``.
    """

    def __init__(self, q_loc: float = 0.0, q_scale: float = 1.5):
        if not q_scale > 0:
            raise ValueError("q_scale must be positive")
        self.__dict__.update(q_loc=float(q_loc), q_scale=float(q_scale))
        super().__init__(
            log_joint=self._log_joint,
            grad_theta_log_joint=self._grad,
            q_sampler=self._sample_q,
            log_q=self._log_q,
            exact_marginal_grad=exact_marginal_grad_linear_gaussian,
        )

    @classmethod
    def posterior_proposal(cls, theta: float, y: float) -> "LinearGaussianModel":
        """Fixture whose proposal is the exact posterior (constant weights)."""
        return cls((y - theta) / 2.0, math.sqrt(0.5))

    @staticmethod
    def _log_joint(theta, y, z):
        z = np.asarray(z, dtype=float)
        r = y - theta - z
        return -0.5 * z * z - 0.5 * r * r - _LOG_2PI

    @staticmethod
    def _grad(theta, y, z):
        return (y - theta - np.asarray(z, dtype=float))[:, None]

    def _sample_q(self, y, stream, n):
        return self.q_loc + self.q_scale * stream.standard_normal(n)

    def _log_q(self, y, z):
        u = (np.asarray(z, dtype=float) - self.q_loc) / self.q_scale
        return -0.5 * u * u - math.log(self.q_scale) - 0.5 * _LOG_2PI


def exact_marginal_grad_linear_gaussian(theta: float, y: float) -> float:
    """``d/dtheta log N(y; theta, 2) = (y - theta) / 2``."""
    return (y - theta) / 2.0


def log_marginal_linear_gaussian(theta: float, y: float) -> float:
    return -0.5 * (y - theta) ** 2 / 2.0 - 0.5 * math.log(2.0 * math.pi * 2.0)


@dataclass(frozen=True)
class WeightedParticleSet:
    particles: np.ndarray
    log_weights: np.ndarray
    normalized: np.ndarray

    @classmethod
    def from_log_weights(cls, particles, log_weights) -> "WeightedParticleSet":
        lw = np.asarray(log_weights, dtype=float)
        if np.any(np.isnan(lw)) or np.any(lw == np.inf) or not np.any(np.isfinite(lw)):
            raise DegenerateWeightsError("importance weights are degenerate")
        norm = np.exp(lw - logsumexp(lw))
        return cls(np.asarray(particles), lw, norm / norm.sum())


def snis_gradient(model: LatentModelSpec, theta, y, particles) -> np.ndarray:
    z = np.asarray(particles, dtype=float)
    if z.shape[0] < 1:
        raise ValueError("need at least one particle")
    ps = WeightedParticleSet.from_log_weights(z, model.log_weights(theta, y, z))
    grads = np.asarray(model.grad_theta_log_joint(theta, y, z), dtype=float)
    return ps.normalized @ grads


def sir_step(model: LatentModelSpec, theta, y, z_prev, k: int, stream: RngStream):
    """One SIR transition; returns ``(z_next, grad_term)``.

    Draw order: slot uniform, ``k - 1`` proposals, selection uniform.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    J = min(int(stream.random() * k), k - 1)
    fresh = np.asarray(model.q_sampler(y, stream, k - 1), dtype=float)
    z = np.insert(fresh, J, z_prev, axis=0)
    ps = WeightedParticleSet.from_log_weights(z, model.log_weights(theta, y, z))
    grads = np.asarray(model.grad_theta_log_joint(theta, y, z), dtype=float)
    cdf = np.cumsum(ps.normalized)
    pick = min(int(np.searchsorted(cdf, stream.random() * cdf[-1], side="right")), k - 1)
    return z[pick], ps.normalized @ grads


def mlmc_iwae_gradient(model: LatentModelSpec, theta, y, k: int, T: float,
                       stream: RngStream, dist: LevelDistribution = GEOMETRIC_HALF):
    """Multilevel IWAE gradient from one SIR chain started at a fresh proposal draw.

    Returns ``(estimate, cost)`` with cost counted in joint-density
    evaluations (``chain length * k``).
    """
    draw = sample_level(dist, stream)
    used = draw.chain_length(T)
    z = np.asarray(model.q_sampler(y, stream, 1), dtype=float)[0]
    terms = []
    for _ in range(used):
        z, g = sir_step(model, theta, y, z, k, stream)
        terms.append(g)
    live = math.floor(draw.tau_K) <= T
    est = combine(np.stack(terms), draw.tau_K, tau(dist, draw.K - 1), live)
    return est, used * k


def mlmc_iwae_batch(model: LinearGaussianModel, theta: float, y: float, k: int, T: float,
                    stream: RngStream, n: int, dist: LevelDistribution = GEOMETRIC_HALF,
                    backend=None):
    """``n`` independent scalar MLMC-IWAE estimates on the linear-Gaussian model.

    Returns ``(estimates, costs)``. With ``T < 2`` every level is truncated
    and the estimates are plain SNIS gradients over ``k`` proposal draws.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    kern = _backend.kernels if backend is None else _backend.get(backend)
    levels = sample_levels(dist, stream, n)
    length, half, weight = level_layout(dist, levels, T)
    steps = int(length.sum())
    z0 = model.q_loc + model.q_scale * stream.standard_normal(n)
    u_slot = stream.random(steps)
    normals = stream.standard_normal(steps * (k - 1))
    u_sel = stream.random(steps)
    est, _ = kern.isir_lg_batch(length, half, weight, float(theta), float(y), int(k),
                                model.q_loc, model.q_scale, z0, u_slot, normals, u_sel)
    return np.asarray(est), length * k


def snis_batch(model: LinearGaussianModel, theta: float, y: float, k: int,
               stream: RngStream, n: int, backend=None) -> np.ndarray:
    """``n`` plain IWAE gradients with ``k`` proposal particles each."""
    return mlmc_iwae_batch(model, theta, y, k, 1.0, stream, n, backend=backend)[0]


def iwae_bound(model: LatentModelSpec, theta, y, k: int, stream: RngStream) -> float:
    """``log((1/k) sum_l w_l)`` for ``k`` fresh proposal draws."""
    if k < 1:
        raise ValueError("k must be >= 1")
    z = np.asarray(model.q_sampler(y, stream, k), dtype=float)
    lw = model.log_weights(theta, y, z)
    WeightedParticleSet.from_log_weights(z, lw)
    return float(logsumexp(lw) - math.log(k))


def iwae_bound_batch(model: LatentModelSpec, theta, y, k: int, stream: RngStream, n: int) -> np.ndarray:
    """``n`` bound replicates from one ``(n, k)`` block of proposal draws."""
    z = np.asarray(model.q_sampler(y, stream, n * k), dtype=float)
    lw = model.log_weights(theta, y, z).reshape(n, k)
    return logsumexp(lw, axis=1) - math.log(k)
