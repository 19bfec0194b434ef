"""Tractable test problems with known stationary means or exact gradients."""

from __future__ import annotations

import math

import numpy as np

from . import _backend
from .core import RngStream, as_param_vector
from .kernels import GaussianTarget, MarkovKernelSpec, simulate_chain
from .mlmc import GEOMETRIC_HALF, GradFn, LevelDistribution, level_layout, sample_levels


class AR1Fixture:
    """Scalar chain ``x' = rho x + scale xi`` started at ``x0``.

    With the defaults the stationary law is ``N(0, 1)``, so the update
    ``H(x) = clip(x, +-clip)`` has stationary mean 0 (up to the clipped
    tails, which are symmetric).
    """

    def __init__(self, rho=0.5, scale=math.sqrt(0.75), x0=2.0, clip=10.0):
        self.rho = float(rho)
        self.scale = float(scale)
        self.x0 = float(x0)
        self.clip = float(clip)
        self.oracle = np.zeros(1)

    def sample_chain(self, length: int, stream: RngStream) -> np.ndarray:
        x = np.empty(length)
        x[0] = self.x0
        xi = stream.standard_normal(length - 1)
        for i in range(1, length):
            x[i] = self.rho * x[i - 1] + self.scale * xi[i - 1]
        return x[:, None]

    @property
    def grad_fn(self) -> GradFn:
        return GradFn(lambda theta, x: x, self.clip)

    def mlmc_batch(self, T: float, stream: RngStream, n: int,
                   dist: LevelDistribution = GEOMETRIC_HALF, backend=None) -> np.ndarray:
        """``n`` independent MLMC estimates at truncation ``T``, shape ``(n, 1)``.

        Levels are drawn first, then one block of normals covering every
        replicate's chain.
        """
        kern = _backend.kernels if backend is None else _backend.get(backend)
        levels = sample_levels(dist, stream, n)
        length, half, weight = level_layout(dist, levels, T)
        normals = stream.standard_normal(int((length - 1).sum()))
        est = kern.ar1_mlmc_batch(length, half, weight, self.x0, self.rho,
                                  self.scale, self.clip, normals)
        return np.asarray(est)[:, None]


class GaussianMeanProblem:
    """``V(theta) = |theta|^2 / 2`` with ``pi_theta = N(theta, I)``.

    The chain is RWMH started at ``x0``; ``H_theta(x) = clip(x, +-G)`` has
    stationary mean ``theta`` (for ``|theta|`` well inside the clip), which
    is ``grad V``.
    """

    def __init__(self, d=10, theta0=5.0, x0=0.0, sigma_p=None, clip=10.0):
        self.d = int(d)
        self.theta0 = as_param_vector(np.broadcast_to(theta0, (self.d,)))
        self.x0 = np.broadcast_to(np.asarray(x0, dtype=float), (self.d,)).copy()
        self.sigma_p = 2.4 / math.sqrt(self.d) if sigma_p is None else float(sigma_p)
        self.grad_fn = GradFn(lambda theta, x: x, clip)

    def sample_chain(self, theta, length: int, stream: RngStream) -> np.ndarray:
        kernel = MarkovKernelSpec.rwmh(GaussianTarget(theta, 1.0), self.sigma_p)
        return simulate_chain(kernel, self.x0, length, stream).states

    def true_grad(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float)

    def value(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        return 0.5 * float(theta @ theta)


class ExactGradientProblem:
    """Quadratic ``V(theta) = theta' diag(curv) theta / 2`` with a degenerate chain.

    Every chain state is the exact gradient, so every MLMC estimate equals
    ``grad V(theta)`` and the optimizer reduces to deterministic descent.
    """

    def __init__(self, theta0, curvature=1.0, bound=1e6):
        self.theta0 = as_param_vector(theta0)
        self.curvature = np.broadcast_to(np.asarray(curvature, dtype=float),
                                         self.theta0.shape).copy()
        self.grad_fn = GradFn(lambda theta, x: x, bound)

    def true_grad(self, theta) -> np.ndarray:
        return self.curvature * np.asarray(theta, dtype=float)

    def sample_chain(self, theta, length: int, stream: RngStream) -> np.ndarray:
        return np.tile(self.true_grad(theta), (length, 1))
