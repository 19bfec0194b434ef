"""Shared numeric types, reproducible random streams and run bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

_U64 = 2**64


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by the Philox-4x64 bit generator with the two 64-bit words of
    its key set to ``seed`` and ``stream_id``. Two streams with different
    ids are different keys of the same block cipher, so they never
    overlap and can be handed to independent replicates freely.
    """

    __slots__ = ("seed", "stream_id", "generator")

    def __init__(self, seed: int, stream_id: int = 0):
        seed, stream_id = int(seed), int(stream_id)
        if not (0 <= seed < _U64 and 0 <= stream_id < _U64):
            raise ValueError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = seed
        self.stream_id = stream_id
        key = np.array([seed, stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def random(self, size=None):
        """Uniform draws on ``[0, 1)``."""
        return self.generator.random(size)

    def log_uniform(self, size=None):
        """``log(U)`` with ``U`` uniform on ``(0, 1]``; never ``-inf``."""
        return np.log1p(-self.generator.random(size))

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def integers(self, high: int, size=None):
        return self.generator.integers(0, high, size)

    def geometric(self, p: float, size=None):
        return self.generator.geometric(p, size)


def make_stream(seed: int, stream_id: int = 0) -> RngStream:
    """Deterministic stream; equal arguments give equal output sequences."""
    return RngStream(seed, stream_id)


def standard_normal(stream: RngStream, n: int) -> np.ndarray:
    if n < 0:
        raise ValueError("n must be non-negative")
    return stream.standard_normal(int(n))


def as_param_vector(theta, dim: Optional[int] = None) -> np.ndarray:
    """Validate and copy a parameter point as a finite float vector."""
    arr = np.array(theta, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ValueError("parameter vector must have dimension >= 1")
    if dim is not None and arr.size != dim:
        raise ValueError(f"expected dimension {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("parameter vector has non-finite entries")
    return arr


@dataclass(frozen=True)
class RunRecord:
    """One optimizer iteration.

    Record ``n`` holds ``theta_n`` together with the estimate, level and
    chain length that produced it. The initial record (``n = 0``) has no
    estimate, so those fields are ``None`` and its cost is zero.
    """

    n: int
    theta: np.ndarray
    grad_estimate: Optional[np.ndarray]
    level: Optional[int]
    chain_len: Optional[int]
    cumulative_cost: int
    true_grad_sq_norm: Optional[float] = None
