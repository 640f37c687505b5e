import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smallball_lab.convolution import (ConvolutionEnsemble, circulant_matvec, circular_convolve,
                                       direct_convolve, fourier_profile, fwht, gaussian_count_mean,
                                       separation_experiment, separation_sweep, sparse_unit_vector,
                                       subsample)
from smallball_lab.errors import DomainError, InputError, ParameterError
from smallball_lab.models import RandomVectorModel

GAUSS_SF2 = 0.920344325445942  # 2 * P(g >= 0.1)


def test_delta_reverses_index():
    xi = np.arange(1.0, 6.0)
    e0 = np.eye(5)[0]
    np.testing.assert_array_equal(direct_convolve(e0, xi), [1, 5, 4, 3, 2])
    np.testing.assert_allclose(circular_convolve(e0, xi), [1, 5, 4, 3, 2], atol=1e-12)


def test_fft_matches_direct_on_100_pairs(rng):
    for _ in range(100):
        a, xi = rng.standard_normal(128), rng.standard_normal(128)
        ref = direct_convolve(a, xi)
        assert np.max(np.abs(circular_convolve(a, xi) - ref)) <= 1e-10
        assert np.max(np.abs(circulant_matvec(a, xi) - ref)) <= 1e-10


def test_batched_convolution(rng):
    a = rng.standard_normal(16)
    X = rng.standard_normal((7, 16))
    batch = circular_convolve(a, X)
    for row, x in zip(batch, X):
        np.testing.assert_allclose(row, direct_convolve(a, x), atol=1e-12)


def test_direct_at_indices(rng):
    a, xi = rng.standard_normal(9), rng.standard_normal(9)
    np.testing.assert_allclose(direct_convolve(a, xi, [2, 7]), direct_convolve(a, xi)[[2, 7]])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2 ** 32 - 1), st.floats(-5, 5), st.floats(-5, 5))
def test_linearity(n, seed, alpha, beta):
    r = np.random.default_rng(seed)
    a, x, y = r.standard_normal((3, n))
    lhs = circular_convolve(a, alpha * x + beta * y)
    rhs = alpha * circular_convolve(a, x) + beta * circular_convolve(a, y)
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_length_mismatch():
    with pytest.raises(InputError):
        circular_convolve(np.ones(3), np.ones(4))


def test_parseval_and_profiles():
    a = np.random.default_rng(3).standard_normal(64)
    a /= np.linalg.norm(a)
    prof = fourier_profile(a)
    assert np.sum(np.abs(prof.a_hat) ** 2) == pytest.approx(1.0, abs=1e-12)

    e1 = fourier_profile(np.eye(16)[0])
    assert e1.q_norms[4.0] == pytest.approx(0.5, rel=1e-12)  # (16 / 4^4)^(1/4)
    assert e1.q_norms[math.inf] == pytest.approx(0.25)
    assert e1.srank_q_gamma[4.0] == pytest.approx(16.0, rel=1e-12)
    assert e1.srank_q_gamma[math.inf] == pytest.approx(16.0, rel=1e-12)

    flat = fourier_profile(np.ones(16) / 4)
    assert flat.q_norms[4.0] == pytest.approx(1.0)
    assert flat.srank_q_gamma[4.0] == pytest.approx(1.0)


def test_profile_errors():
    with pytest.raises(DomainError):
        fourier_profile(np.zeros(4))
    with pytest.raises(ParameterError):
        fourier_profile(np.ones(4))
    with pytest.raises(ParameterError):
        fourier_profile(np.eye(4)[0], qs=(2.0,))
    with pytest.raises(ParameterError):
        fourier_profile(np.eye(4)[0], transform="dct")


def test_walsh_mode():
    H = np.array([fwht(e) for e in np.eye(8)])
    np.testing.assert_allclose(H @ H.T, np.eye(8), atol=1e-12)
    assert np.all(np.abs(np.abs(H) - 1 / math.sqrt(8)) < 1e-12)
    prof = fourier_profile(np.eye(8)[0], transform="walsh")
    assert prof.transform == "walsh" and prof.srank_q_gamma[4.0] == pytest.approx(8.0)
    with pytest.raises(ParameterError):
        fwht(np.ones(6))


def test_subsample_extremes(rng):
    v = np.arange(10.0)
    idx, vals = subsample(v, 0.0, rng)
    assert idx.size == 0 and vals.size == 0
    idx, vals = subsample(v, 1.0, rng)
    np.testing.assert_array_equal(idx, np.arange(10))
    with pytest.raises(ParameterError):
        subsample(v, 1.5, rng)


def test_subsample_mean_size(rng):
    sizes = [subsample(np.zeros(1000), 0.3, rng)[0].size for _ in range(400)]
    se = math.sqrt(1000 * 0.3 * 0.7 / 400)
    assert abs(np.mean(sizes) - 300) <= 4 * se


def test_sparse_unit_vector(rng):
    a = sparse_unit_vector(50, 7, rng)
    assert np.count_nonzero(a) == 7 and np.linalg.norm(a) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        sparse_unit_vector(5, 6, rng)


def test_ensemble_validation():
    g = RandomVectorModel.gaussian(4)
    with pytest.raises(ParameterError):
        ConvolutionEnsemble(np.ones(4), 0.5, g)
    with pytest.raises(ParameterError):
        ConvolutionEnsemble(np.eye(4)[0], 0.0, g)
    with pytest.raises(InputError):
        ConvolutionEnsemble(np.eye(5)[0], 0.5, g)
    ens = ConvolutionEnsemble.sparse(32, 4, 0.5, RandomVectorModel.gaussian(32), seed=5)
    assert ens.n == 32 and ens.s == 4
    again = ConvolutionEnsemble.sparse(32, 4, 0.5, RandomVectorModel.gaussian(32), seed=5)
    np.testing.assert_array_equal(ens.a, again.a)


def test_gaussian_delta_one_count_mean():
    n, trials = 64, 20_000
    ens = ConvolutionEnsemble(np.eye(n)[0], 1.0, RandomVectorModel.gaussian(n))
    rep = separation_experiment(ens, 0.1, trials, seed=1)
    assert gaussian_count_mean(n, 1.0, 0.1) == pytest.approx(n * GAUSS_SF2, rel=1e-12)
    assert abs(rep.mean_count - n * GAUSS_SF2) <= 4 * rep.count_se
    assert rep.exponent_new == pytest.approx(n)
    assert rep.exponent_old == pytest.approx(n)


def test_e2_monotone_in_epsilon():
    ens = ConvolutionEnsemble.sparse(64, 8, 0.25, RandomVectorModel.cube(64), seed=2)
    reps = separation_sweep(ens, [0.2, 0.5, 0.8, 0.95], 4000, seed=3)
    e2 = [r.p_E2.p_hat for r in reps]
    e1 = [r.p_E1.p_hat for r in reps]
    assert all(x >= y for x, y in zip(e2, e2[1:]))
    assert all(x >= y for x, y in zip(e1, e1[1:]))


def test_sweep_thread_invariance():
    ens = ConvolutionEnsemble.sparse(32, 3, 0.5, RandomVectorModel.gaussian(32), seed=4)
    a = separation_sweep(ens, [0.3], 40_000, seed=9, threads=1)
    b = separation_sweep(ens, [0.3], 40_000, seed=9, threads=4)
    assert a == b


def test_fft_is_fast_at_large_n(rng):
    n = 2 ** 16
    a, xi = rng.standard_normal(n), rng.standard_normal(n)
    t0 = time.perf_counter()
    c = circular_convolve(a, xi)
    fft_time = time.perf_counter() - t0
    idx = rng.choice(n, 64, replace=False)
    t0 = time.perf_counter()
    ref = direct_convolve(a, xi, idx)
    direct_time = (time.perf_counter() - t0) * n / idx.size
    assert np.max(np.abs(c[idx] - ref)) <= 1e-8 * math.sqrt(n)
    assert fft_time * 10 < direct_time
