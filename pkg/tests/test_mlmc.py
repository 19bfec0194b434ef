import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlmc_opt.core import make_stream
from mlmc_opt.mlmc import (
    GEOMETRIC_HALF, ChainLengthError, GradFn, LevelDistribution, LevelDomainError, LevelDraw,
    TruncationConfigError, expected_cost, level_layout, max_level, mixture_mean, mlmc_estimate,
    partial_mean, sample_level, sample_levels, tau,
)

IDENT = GradFn(lambda theta, x: x, 1e6)


def test_tau_values():
    assert tau(GEOMETRIC_HALF, 0) == 1.0
    assert tau(GEOMETRIC_HALF, 3) == 8.0
    assert all(tau(GEOMETRIC_HALF, k) == 2.0**k for k in range(1, 30))
    assert tau(LevelDistribution.finite([0.5, 0.5]), 2) == 2.0


def test_tau_domain():
    with pytest.raises(LevelDomainError):
        tau(LevelDistribution.finite([0.5, 0.5]), 3)
    with pytest.raises(LevelDomainError):
        tau(GEOMETRIC_HALF, -1)


def test_pmf_validation():
    with pytest.raises(ValueError):
        LevelDistribution.finite([0.3, 0.7])  # increasing
    with pytest.raises(ValueError):
        LevelDistribution.finite([0.5, 0.4])  # does not sum to one
    with pytest.raises(ValueError):
        LevelDistribution.geometric(1.0)


@pytest.mark.parametrize("T,k", [(16, 4), (15, 3), (2, 1), (2.5, 1), (1023.9, 9)])
def test_max_level(T, k):
    assert max_level(GEOMETRIC_HALF, T) == k


def test_max_level_below_first_span():
    with pytest.raises(TruncationConfigError):
        max_level(GEOMETRIC_HALF, 1.5)


def test_sample_level_law():
    K = sample_levels(GEOMETRIC_HALF, make_stream(5, 0), 1_000_000)
    assert K.min() >= 1
    assert abs((K == 1).mean() - 0.5) < 0.002
    assert abs(K.mean() - 2.0) < 0.01


def test_sample_level_degenerate_pmf():
    d = LevelDistribution.finite([1.0])
    s = make_stream(1)
    assert all(sample_level(d, s).K == 1 for _ in range(50))


def test_finite_pmf_sampling():
    d = LevelDistribution.finite([0.5, 0.3, 0.2])
    K = sample_levels(d, make_stream(2), 200_000)
    assert np.allclose(np.bincount(K, minlength=4)[1:] / len(K), [0.5, 0.3, 0.2], atol=0.005)


def test_partial_mean_examples():
    assert partial_mean([[2.0], [4.0]], 2)[0] == 3.0
    assert partial_mean([[2.0], [4.0], [9.0]], 2.9)[0] == 3.0
    assert partial_mean([[5.0]], 1)[0] == 5.0
    with pytest.raises(ChainLengthError):
        partial_mean([[1.0]], 2)


def test_estimate_truncated_level():
    chain = np.array([[7.0]])
    est, used = mlmc_estimate(IDENT, 0, chain, LevelDraw(4, 16.0), T=8)
    assert used == 1 and est[0] == 7.0


def test_estimate_hand_value():
    est, used = mlmc_estimate(IDENT, 0, np.array([[1.0], [3.0]]), LevelDraw(1, 2.0), T=2)
    assert used == 2 and est[0] == 3.0


def test_estimate_constant_values():
    chain = np.full((64, 2), 1.25)
    for K in range(1, 7):
        for T in (2, 8, 64):
            est, _ = mlmc_estimate(IDENT, 0, chain, LevelDraw(K, 2.0**K), T)
            assert np.all(est == 1.25)


def test_estimate_short_chain():
    with pytest.raises(ChainLengthError):
        mlmc_estimate(IDENT, 0, np.zeros((3, 1)), LevelDraw(2, 4.0), T=8)


def test_grad_fn_clips():
    g = GradFn(lambda th, x: np.array([5.0, -5.0, 0.5]), 1.0)
    assert np.array_equal(g(0, 0), [1.0, -1.0, 0.5])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 9), st.integers(1, 10))
def test_estimate_sup_bound(seed, K, T):
    G = 2.0
    g = GradFn(lambda th, x: x, G)
    chain = 5 * make_stream(seed).standard_normal((2**K, 3))
    est, _ = mlmc_estimate(g, 0, chain, LevelDraw(K, 2.0**K), T)
    assert np.max(np.abs(est)) <= G * (1 + 2 * 2.0**K)


def test_mixture_mean_examples():
    assert mixture_mean(IDENT, 0, np.array([[1.0], [3.0]]), GEOMETRIC_HALF, 2)[0] == 2.0
    assert mixture_mean(IDENT, 0, np.full((8, 1), 4.0), GEOMETRIC_HALF, 8)[0] == 4.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 10))
def test_mixture_matches_plain_mean(seed, k):
    chain = make_stream(seed).standard_normal((2**k, 2))
    a = mixture_mean(IDENT, 0, chain, GEOMETRIC_HALF, 2**k)
    b = partial_mean(chain, 2**k)
    assert np.all(np.abs(a - b) <= 1e-12 * np.maximum(np.abs(b), 1e-300) + 1e-14)


def test_expected_cost_values():
    assert expected_cost(GEOMETRIC_HALF, 16) == 4.0625
    assert expected_cost(GEOMETRIC_HALF, 2) == 1.5
    for m in range(1, 21):
        assert expected_cost(GEOMETRIC_HALF, 2**m) == m + 2.0**-m


def test_level_layout():
    length, half, weight = level_layout(GEOMETRIC_HALF, np.array([1, 2, 5]), 8)
    assert length.tolist() == [2, 4, 1]
    assert half.tolist() == [1, 2, 1]
    assert weight.tolist() == [2.0, 4.0, 0.0]


def test_draw_against():
    d = LevelDraw(3, 8.0)
    assert d.against(7).truncated and not d.against(8).truncated
    assert d.chain_length(7) == 1 and d.chain_length(8) == 8
