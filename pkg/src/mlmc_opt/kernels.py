"""Markov transition kernels targeting a density known up to a constant.

Random-walk Metropolis-Hastings and Metropolis-adjusted Langevin steps,
chain simulation, a discretized transition-matrix oracle for 1-D targets
and a two-state test chain with an exactly known stationary law.

All density work is in log space. A proposal ``y`` is accepted when
``log U < log alpha(x, y)`` with ``U`` uniform on ``(0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _backend
from .core import RngStream


class KernelStateError(ValueError):
    """Log density is not finite at the current state."""


class KernelConfigError(ValueError):
    pass


class TargetDensity:
    """Unnormalized log density on R^q, optionally with its gradient."""

    def __init__(self, log_pdf: Callable, grad_log_pdf: Optional[Callable] = None, dim: int = 1):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        self._log_pdf = log_pdf
        self._grad = grad_log_pdf
        self.dim = int(dim)

    def log_pdf(self, x) -> float:
        return float(self._log_pdf(np.asarray(x, dtype=float)))

    @property
    def has_gradient(self) -> bool:
        return self._grad is not None

    def grad_log_pdf(self, x) -> np.ndarray:
        if self._grad is None:
            raise KernelConfigError("target has no gradient")
        return np.atleast_1d(np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float))


class GaussianTarget(TargetDensity):
    """Isotropic Gaussian ``N(mean, scale^2 I)``; RWMH on it uses the compiled path."""

    def __init__(self, mean, scale: float = 1.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float)).copy()
        self.scale = float(scale)
        self.inv_var = 1.0 / (self.scale * self.scale)
        super().__init__(self._lp, self._glp, self.mean.size)

    def _lp(self, x):
        d = x - self.mean
        return -0.5 * float(np.dot(d, d)) * self.inv_var

    def _glp(self, x):
        return -(x - self.mean) * self.inv_var


def check_gradient(target: TargetDensity, stream: RngStream, probes: int = 100,
                   rtol: float = 1e-5, spread: float = 2.0, step: float = 1e-5) -> bool:
    """Compare the gradient with central finite differences at random points."""
    q = target.dim
    for _ in range(probes):
        x = spread * stream.standard_normal(q)
        g = target.grad_log_pdf(x)
        fd = np.empty(q)
        for j in range(q):
            e = np.zeros(q)
            e[j] = step
            fd[j] = (target.log_pdf(x + e) - target.log_pdf(x - e)) / (2 * step)
        if np.linalg.norm(g - fd) > rtol * max(1.0, np.linalg.norm(g)):
            return False
    return True


@dataclass(frozen=True)
class MarkovKernelSpec:
    """Transition rule: ``kind`` is ``"rwmh"`` (scale = proposal sd) or ``"mala"`` (scale = step h)."""

    kind: str
    target: TargetDensity
    scale: float
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("rwmh", "mala"):
            raise KernelConfigError(f"unknown kernel kind {self.kind!r}")
        if not self.scale > 0:
            raise KernelConfigError("proposal scale / step size must be positive")
        if self.kind == "mala" and not self.target.has_gradient:
            raise KernelConfigError("MALA needs grad_log_pdf")

    @classmethod
    def rwmh(cls, target, sigma_p=None, x0=None):
        # default 2.4/sqrt(q) is a tuning convention, not a requirement
        sigma_p = 2.4 / math.sqrt(target.dim) if sigma_p is None else sigma_p
        return cls("rwmh", target, float(sigma_p), x0)

    @classmethod
    def mala(cls, target, h=None, x0=None):
        h = 0.5 / target.dim if h is None else h
        return cls("mala", target, float(h), x0)

    def step(self, x, stream: RngStream):
        if self.kind == "rwmh":
            return rwmh_step(x, self.target, self.scale, stream)
        return mala_step(x, self.target, self.scale, stream)


@dataclass
class Trajectory:
    states: np.ndarray
    accept_count: int

    def __len__(self):
        return len(self.states)


def _finite_log_pdf(target, x):
    lp = target.log_pdf(x)
    if not math.isfinite(lp):
        raise KernelStateError(f"log density not finite at state {x!r}")
    return lp


def rwmh_accept_prob(x, y, target: TargetDensity) -> float:
    return math.exp(min(0.0, target.log_pdf(y) - _finite_log_pdf(target, x)))


def _mala_log_ratio(x, y, lp_x, lp_y, g_x, g_y, h):
    fwd = y - x - h * g_x
    bwd = x - y - h * g_y
    return lp_y - lp_x + (float(np.dot(fwd, fwd)) - float(np.dot(bwd, bwd))) / (4 * h)


def mala_proposal_mean(x, target: TargetDensity, h: float) -> np.ndarray:
    """``x - h grad U(x)``, the centre of the Langevin proposal."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return x + h * target.grad_log_pdf(x)


def mala_accept_prob(x, y, target: TargetDensity, h: float) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lr = _mala_log_ratio(
        x, y, _finite_log_pdf(target, x), target.log_pdf(y),
        target.grad_log_pdf(x), target.grad_log_pdf(y), h,
    )
    return math.exp(min(0.0, lr))


def _rwmh_move(x, lp_x, target, sigma_p, z, log_u):
    y = x + sigma_p * z
    lp_y = target.log_pdf(y)
    if log_u < lp_y - lp_x:
        return y, lp_y, True
    return x, lp_x, False


def _mala_move(x, lp_x, g_x, target, h, z, log_u):
    y = x + h * g_x + math.sqrt(2 * h) * z
    lp_y = target.log_pdf(y)
    if not math.isfinite(lp_y):
        return x, lp_x, g_x, False
    g_y = target.grad_log_pdf(y)
    if log_u < _mala_log_ratio(x, y, lp_x, lp_y, g_x, g_y, h):
        return y, lp_y, g_y, True
    return x, lp_x, g_x, False


def rwmh_step(x, target: TargetDensity, sigma_p: float, stream: RngStream):
    """One RWMH transition; returns ``(x_next, accepted)``."""
    if not sigma_p > 0:
        raise KernelConfigError("sigma_p must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lp_x = _finite_log_pdf(target, x)
    z = stream.standard_normal(x.size)
    y, _, acc = _rwmh_move(x, lp_x, target, sigma_p, z, float(stream.log_uniform()))
    return y, acc


def mala_step(x, target: TargetDensity, h: float, stream: RngStream):
    """One MALA transition with the full Hastings correction."""
    if not h > 0:
        raise KernelConfigError("step size must be positive")
    if not target.has_gradient:
        raise KernelConfigError("MALA needs grad_log_pdf")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lp_x = _finite_log_pdf(target, x)
    z = stream.standard_normal(x.size)
    y, _, _, acc = _mala_move(x, lp_x, target.grad_log_pdf(x), target, h, z,
                              float(stream.log_uniform()))
    return y, acc


def simulate_chain(kernel, x0, length: int, stream: RngStream) -> Trajectory:
    """Chain of exactly ``length`` states starting at ``x0``.

    For a ``MarkovKernelSpec`` the stream is consumed as one block of
    ``(length - 1, q)`` normals followed by ``length - 1`` uniforms, so RWMH
    and MALA with zero drift see the same numbers. Any other object with a
    ``step(x, stream)`` method is stepped one transition at a time.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if not isinstance(kernel, MarkovKernelSpec):
        states = [np.atleast_1d(np.asarray(x0))]
        acc = 0
        for _ in range(length - 1):
            x, a = kernel.step(states[-1], stream)
            states.append(np.atleast_1d(np.asarray(x)))
            acc += int(a)
        return Trajectory(np.stack(states), acc)

    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    steps = length - 1
    z = stream.standard_normal((steps, x.size))
    log_u = stream.log_uniform(steps)
    target = kernel.target
    lp = _finite_log_pdf(target, x)

    if kernel.kind == "rwmh" and isinstance(target, GaussianTarget):
        states, acc = _backend.kernels.rwmh_gauss_chain(
            x, target.mean, target.inv_var, kernel.scale, z, log_u)
        return Trajectory(np.asarray(states), int(acc))

    states = np.empty((length, x.size))
    states[0] = x
    acc = 0
    if kernel.kind == "rwmh":
        for i in range(steps):
            x, lp, a = _rwmh_move(x, lp, target, kernel.scale, z[i], log_u[i])
            states[i + 1] = x
            acc += a
    else:
        g = target.grad_log_pdf(x)
        for i in range(steps):
            x, lp, g, a = _mala_move(x, lp, g, target, kernel.scale, z[i], log_u[i])
            states[i + 1] = x
            acc += a
    return Trajectory(states, acc)


def _cell_widths(grid):
    grid = np.asarray(grid, dtype=float)
    mids = 0.5 * (grid[1:] + grid[:-1])
    edges = np.concatenate([[grid[0] - (mids[0] - grid[0])], mids,
                            [grid[-1] + (grid[-1] - mids[-1])]])
    return np.diff(edges)


def grid_stationary(target: TargetDensity, grid) -> np.ndarray:
    """Target mass on grid cells, normalized to sum to one."""
    grid = np.asarray(grid, dtype=float)
    lp = np.array([target.log_pdf([g]) for g in grid])
    w = np.exp(lp - lp.max()) * _cell_widths(grid)
    return w / w.sum()


def transition_matrix_oracle(kernel: MarkovKernelSpec, grid) -> np.ndarray:
    """Row-stochastic discretization of a 1-D kernel on a sorted grid.

    Off-diagonal entries are proposal density times acceptance times the
    destination cell width; the diagonal carries the remaining (rejection)
    mass.
    """
    if kernel.target.dim != 1:
        raise NotImplementedError("transition matrix oracle needs a 1-D target")
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    target = kernel.target
    widths = _cell_widths(grid)
    lp = np.array([target.log_pdf([g]) for g in grid])
    xi = grid[:, None]
    xj = grid[None, :]
    if kernel.kind == "rwmh":
        s = kernel.scale
        dens = np.exp(-0.5 * ((xj - xi) / s) ** 2) / (s * math.sqrt(2 * math.pi))
        log_alpha = np.minimum(0.0, lp[None, :] - lp[:, None])
    else:
        h = kernel.scale
        g = np.array([target.grad_log_pdf([v])[0] for v in grid])
        mean_fwd = grid + h * g
        var = 2 * h
        log_q_fwd = -((xj - mean_fwd[:, None]) ** 2) / (2 * var)
        log_q_bwd = -((xi - mean_fwd[None, :]) ** 2) / (2 * var)
        dens = np.exp(log_q_fwd) / math.sqrt(2 * math.pi * var)
        log_alpha = np.minimum(0.0, lp[None, :] - lp[:, None] + log_q_bwd - log_q_fwd)
    P = dens * np.exp(log_alpha) * widths[None, :]
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def tv_decay(P: np.ndarray, start: int, pi: np.ndarray, steps: int) -> np.ndarray:
    """Total-variation distance to ``pi`` after 1..steps transitions from a grid point."""
    dist = np.zeros(len(pi))
    dist[start] = 1.0
    out = np.empty(steps)
    for k in range(steps):
        dist = dist @ P
        out[k] = 0.5 * np.abs(dist - pi).sum()
    return out


class TwoStateChain:
    """Discrete chain on {0, 1} with flip probabilities ``p01`` and ``p10``."""

    def __init__(self, p01: float, p10: float):
        if not (0 < p01 <= 1 and 0 < p10 <= 1):
            raise ValueError("flip probabilities must lie in (0, 1]")
        self.p01 = p01
        self.p10 = p10

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[1 - self.p01, self.p01], [self.p10, 1 - self.p10]])

    def stationary(self) -> np.ndarray:
        tot = self.p01 + self.p10
        return np.array([self.p10 / tot, self.p01 / tot])

    def step(self, x, stream: RngStream):
        s = int(np.asarray(x).reshape(-1)[0])
        flip = self.p01 if s == 0 else self.p10
        if stream.random() < flip:
            return np.array([1 - s]), True
        return np.array([s]), False
