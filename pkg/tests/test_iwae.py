import math

import numpy as np
import pytest
from scipy import integrate, stats

from mlmc_opt.core import make_stream
from mlmc_opt.iwae import (
    DegenerateWeightsError, LinearGaussianModel, WeightedParticleSet,
    exact_marginal_grad_linear_gaussian, iwae_bound, iwae_bound_batch,
    log_marginal_linear_gaussian, mlmc_iwae_batch, mlmc_iwae_gradient, sir_step, snis_batch,
    snis_gradient,
)

MODEL = LinearGaussianModel(0.0, 1.5)


def test_exact_grad_examples():
    assert exact_marginal_grad_linear_gaussian(0.0, 1.0) == 0.5
    assert exact_marginal_grad_linear_gaussian(1.7, 1.7) == 0.0
    assert exact_marginal_grad_linear_gaussian(2.0, 0.0) == -1.0


def test_exact_grad_fisher_identity_quadrature():
    theta, y = 0.3, -1.1
    joint = lambda z: math.exp(float(MODEL.log_joint(theta, y, np.array([z]))[0]))
    num = integrate.quad(lambda z: (y - theta - z) * joint(z), -np.inf, np.inf)[0]
    den = integrate.quad(joint, -np.inf, np.inf)[0]
    assert math.isclose(num / den, exact_marginal_grad_linear_gaussian(theta, y), rel_tol=1e-8)
    assert math.isclose(math.log(den), log_marginal_linear_gaussian(theta, y), rel_tol=1e-10)


def test_weight_normalization():
    ps = WeightedParticleSet.from_log_weights(np.zeros(2), np.log([1.0, 3.0]))
    assert np.allclose(ps.normalized, [0.25, 0.75], rtol=1e-15)
    wide = WeightedParticleSet.from_log_weights(np.zeros(3), [-600.0, 0.0, -300.0])
    assert abs(wide.normalized.sum() - 1) <= 1e-12 and np.all(np.isfinite(wide.normalized))
    with pytest.raises(DegenerateWeightsError):
        WeightedParticleSet.from_log_weights(np.zeros(2), [-np.inf, -np.inf])
    with pytest.raises(DegenerateWeightsError):
        WeightedParticleSet.from_log_weights(np.zeros(2), [np.nan, 0.0])


def test_snis_single_particle():
    g = snis_gradient(MODEL, 0.2, 1.0, np.array([0.4]))
    assert g[0] == 1.0 - 0.2 - 0.4


def test_snis_consistency():
    s = make_stream(6)
    vals = [snis_gradient(MODEL, 0.0, 3.0, MODEL.q_sampler(3.0, s, 10_000))[0] for _ in range(100)]
    vals = np.array(vals)
    se = vals.std(ddof=1) / 10
    assert abs(vals.mean() - 1.5) < 5 * max(se, 1e-3)


def test_sir_step_single_particle_is_identity():
    s = make_stream(1)
    z, g = sir_step(MODEL, 0.0, 2.0, 0.7, 1, s)
    assert z == 0.7 and g[0] == 2.0 - 0.7


def test_sir_equal_weights_uniform_pick():
    post = LinearGaussianModel.posterior_proposal(0.0, 1.0)
    s = make_stream(2)
    # with constant weights the selected slot is uniform; track which slot wins
    picks = np.zeros(4)
    for _ in range(20_000):
        z_prev = 123.0
        z, _ = sir_step(post, 0.0, 1.0, z_prev, 4, s)
        picks[0] += z == z_prev
    assert abs(picks[0] / 20_000 - 0.25) < 0.01


def test_sir_chain_reaches_posterior():
    theta, y, k = 0.0, 3.0, 5
    n, steps = 2_000, 50
    s = make_stream(3)
    z = np.empty(n)
    for i in range(n):
        zi = float(MODEL.q_sampler(y, s, 1)[0])
        for _ in range(steps):
            zi, _ = sir_step(MODEL, theta, y, zi, k, s)
        z[i] = zi
    se = z.std(ddof=1) / math.sqrt(n)
    assert abs(z.mean() - (y - theta) / 2) < 3 * se


def test_sir_kernel_reaches_posterior(backend):
    from mlmc_opt import _backend

    theta, y, k, n, steps = 0.0, 3.0, 5, 10_000, 50
    s = make_stream(31)
    length = np.full(n, steps, dtype=np.int64)
    _, last = _backend.get(backend).isir_lg_batch(
        length, length // 2, np.zeros(n), theta, y, k, 0.0, 1.5, 1.5 * s.standard_normal(n),
        s.random(n * steps), s.standard_normal(n * steps * (k - 1)), s.random(n * steps))
    last = np.asarray(last)
    assert abs(last.mean() - (y - theta) / 2) < 3 * last.std(ddof=1) / math.sqrt(n)
    assert abs(last.var() - 0.5) < 0.03


def test_mlmc_iwae_truncated_is_snis():
    s1, s2 = make_stream(4), make_stream(4)
    est, cost = mlmc_iwae_gradient(MODEL, 0.0, 3.0, 5, 1.0, s1)
    # same draws by hand: level, start, then one SIR step
    s2.geometric(0.5, 1)
    z0 = MODEL.q_sampler(3.0, s2, 1)[0]
    _, g = sir_step(MODEL, 0.0, 3.0, z0, 5, s2)
    assert cost == 5 and np.array_equal(est, g)


def test_mlmc_iwae_cost():
    s = make_stream(5)
    for _ in range(50):
        _, cost = mlmc_iwae_gradient(MODEL, 0.0, 3.0, 3, 16, s)
        assert cost % 3 == 0 and cost // 3 in (1, 2, 4, 8, 16)


def test_single_path_matches_batch_in_law():
    s = make_stream(8)
    single = np.array([mlmc_iwae_gradient(MODEL, 0.0, 3.0, 5, 8, s)[0][0] for _ in range(20_000)])
    batch, _ = mlmc_iwae_batch(MODEL, 0.0, 3.0, 5, 8, make_stream(9), 20_000)
    assert stats.ks_2samp(single, batch).pvalue > 0.001


def test_posterior_proposal_unbiased():
    theta, y = 0.5, 2.0
    post = LinearGaussianModel.posterior_proposal(theta, y)
    est, _ = mlmc_iwae_batch(post, theta, y, 5, 64, make_stream(10), 100_000)
    se = est.std(ddof=1) / math.sqrt(len(est))
    assert abs(est.mean() - exact_marginal_grad_linear_gaussian(theta, y)) < 3 * se


def test_bound_single_sample_prior():
    prior = LinearGaussianModel(0.0, 1.0)
    s1, s2 = make_stream(11), make_stream(11)
    b = iwae_bound(prior, 0.0, 1.2, 1, s1)
    z = prior.q_sampler(1.2, s2, 1)[0]
    loglik = -0.5 * (1.2 - z) ** 2 - 0.5 * math.log(2 * math.pi)
    assert math.isclose(b, loglik, rel_tol=1e-12)


def test_bound_exact_under_posterior():
    theta, y = -0.4, 1.3
    post = LinearGaussianModel.posterior_proposal(theta, y)
    target = log_marginal_linear_gaussian(theta, y)
    s = make_stream(12)
    for k in (1, 2, 7):
        assert abs(iwae_bound(post, theta, y, k, s) - target) <= 1e-12
    assert np.all(np.abs(iwae_bound_batch(post, theta, y, 5, s, 1000) - target) <= 1e-12)


def test_snis_batch_is_plain_estimator():
    s = make_stream(13)
    a = snis_batch(MODEL, 0.0, 3.0, 5, s, 30_000)
    b = np.array([snis_gradient(MODEL, 0.0, 3.0, MODEL.q_sampler(3.0, s, 5))[0] for _ in range(30_000)])
    assert stats.ks_2samp(a, b).pvalue > 0.001
