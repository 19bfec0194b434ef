import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlmc_opt import _backend
from mlmc_opt.core import make_stream
from mlmc_opt.mlmc import GEOMETRIC_HALF, GradFn, LevelDraw, level_layout, mlmc_estimate, sample_levels
from mlmc_opt.problems import AR1Fixture

needs_both = pytest.mark.skipif(len(_backend.BACKENDS) < 2, reason="compiled core not built")


def test_default_backend_selected():
    assert _backend.NAME in _backend.BACKENDS
    with pytest.raises(ValueError):
        _backend.get("fortran")


def test_env_forces_python_backend():
    env = dict(os.environ, MLMC_OPT_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", "import mlmc_opt; print(mlmc_opt.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def _layout(seed, n, T):
    s = make_stream(seed)
    return s, level_layout(GEOMETRIC_HALF, sample_levels(GEOMETRIC_HALF, s, n), T)


@needs_both
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 300), st.sampled_from([1, 2, 3, 16, 100, 512]))
def test_ar1_backends_agree(seed, n, T):
    s, (length, half, weight) = _layout(seed, n, T)
    normals = s.standard_normal(int((length - 1).sum()))
    args = (length, half, weight, 2.0, 0.5, math.sqrt(0.75), 1.5, normals)
    a = _backend.get("cython").ar1_mlmc_batch(*args)
    b = _backend.get("python").ar1_mlmc_batch(*args)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


@needs_both
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 200), st.sampled_from([1, 2, 8, 64]),
       st.integers(1, 7))
def test_isir_backends_agree(seed, n, T, k):
    s, (length, half, weight) = _layout(seed, n, T)
    steps = int(length.sum())
    args = (length, half, weight, 0.3, 2.0, k, 0.1, 1.5, s.standard_normal(n),
            s.random(steps), s.standard_normal(steps * (k - 1)), s.random(steps))
    ea, za = _backend.get("cython").isir_lg_batch(*args)
    eb, zb = _backend.get("python").isir_lg_batch(*args)
    np.testing.assert_allclose(ea, eb, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(za, zb, rtol=0, atol=0)


@needs_both
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 400), st.integers(1, 6))
def test_rwmh_backends_agree(seed, steps, q):
    s = make_stream(seed)
    z = s.standard_normal((steps, q))
    lu = s.log_uniform(steps)
    args = (s.standard_normal(q), s.standard_normal(q), 0.7, 0.9, z, lu)
    xa, aa = _backend.get("cython").rwmh_gauss_chain(*args)
    xb, ab = _backend.get("python").rwmh_gauss_chain(*args)
    np.testing.assert_allclose(xa, xb, rtol=0, atol=1e-12)
    assert aa == ab


def test_ar1_batch_matches_reference_estimator(backend):
    fx = AR1Fixture(clip=1.5)
    n, T = 400, 32
    s, (length, half, weight) = _layout(17, n, T)
    normals = s.standard_normal(int((length - 1).sum()))
    got = _backend.get(backend).ar1_mlmc_batch(length, half, weight, fx.x0, fx.rho, fx.scale,
                                               fx.clip, normals)
    grad = GradFn(lambda th, x: x, fx.clip)
    levels = sample_levels(GEOMETRIC_HALF, make_stream(17), n)
    pos = 0
    for r in range(n):
        L = int(length[r])
        x = np.empty(L)
        x[0] = fx.x0
        for i in range(1, L):
            x[i] = fx.rho * x[i - 1] + fx.scale * normals[pos]
            pos += 1
        K = int(levels[r])
        ref, used = mlmc_estimate(grad, 0, x[:, None], LevelDraw(K, 2.0**K), T)
        assert used == L
        assert math.isclose(got[r], ref[0], rel_tol=1e-12, abs_tol=1e-12)


def test_isir_single_particle_is_frozen(backend):
    n = 50
    length = np.full(n, 4, dtype=np.int64)
    z0 = np.linspace(-1, 1, n)
    s = make_stream(2)
    est, last = _backend.get(backend).isir_lg_batch(
        length, np.full(n, 2, dtype=np.int64), np.full(n, 4.0), 0.0, 1.0, 1, 0.0, 1.5, z0,
        s.random(4 * n), np.empty(0), s.random(4 * n))
    np.testing.assert_array_equal(last, z0)
    np.testing.assert_allclose(est, 1.0 - z0, rtol=1e-15, atol=1e-15)
