import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as sps

from smallball_lab.coordinate import (OrthonormalBasis, binomial_count_pmf, block_decompose,
                                      coord_count, csb_bound_eval, general_precondition_path,
                                      restricted_invertibility_select, smin, topk_norm)
from smallball_lab.errors import InputError, ParameterError, PreconditionError
from smallball_lab.models import RandomVectorModel
from smallball_lab.operator import Operator, schatten_norm, stable_rank

CSB_EXAMPLE = 9.05096679918781  # q=4, m=64, k_q=32, s=1/2, theta=0.05, L=1


def unit_rows(m, n, seed):
    M = np.random.default_rng(seed).standard_normal((m, n))
    return M / np.linalg.norm(M, axis=1, keepdims=True)


# -- bases and counting ------------------------------------------------------

def test_basis_validation():
    assert OrthonormalBasis.standard(3).dim == 3
    B = OrthonormalBasis.haar(5, seed=1)
    assert np.allclose(B.vectors.T @ B.vectors, np.eye(5), atol=1e-10)
    with pytest.raises(InputError):
        OrthonormalBasis(np.ones((2, 2)))
    with pytest.raises(InputError):
        OrthonormalBasis(np.eye(3)[:, :2])


def test_tiny_theta_gives_full_count():
    rep = coord_count(RandomVectorModel.gaussian(6), Operator.identity(6),
                      OrthonormalBasis.standard(6), 1e-300, 0.5, 5000)
    assert rep.counts[-1] == 5000 and rep.p_fail.p_hat == 0.0


def test_binomial_law_standard_basis():
    rep = coord_count(RandomVectorModel.gaussian(16), Operator.identity(16),
                      OrthonormalBasis.standard(16), 1.0, 0.5, 10 ** 6, seed=1, threads=4)
    assert rep.tv_distance(binomial_count_pmf(16, 1.0)) <= 0.02


def test_rotation_invariance_two_sample():
    m, trials = 8, 100_000
    model, T = RandomVectorModel.gaussian(m), Operator.identity(m)
    a = coord_count(model, T, OrthonormalBasis.standard(m), 0.7, 0.5, trials, seed=2)
    b = coord_count(model, T, OrthonormalBasis.haar(m, seed=3), 0.7, 0.5, trials, seed=4)
    table = np.array([a.counts, b.counts])
    table = table[:, table.sum(axis=0) > 0]
    assert sps.chi2_contingency(table)[1] > 0.001


def test_mean_count_matches_binomial_mean():
    m, theta, trials = 10, 0.8, 200_000
    rep = coord_count(RandomVectorModel.gaussian(m), Operator.identity(m),
                      OrthonormalBasis.haar(m, 5), theta, 0.3, trials, seed=6)
    p = 2 * sps.norm.sf(theta)
    se = math.sqrt(m * p * (1 - p) / trials)
    assert abs(rep.mean_count() - m * p) <= 3 * se


def test_p_fail_bookkeeping():
    rep = coord_count(RandomVectorModel.cube(9), Operator.identity(9), OrthonormalBasis.haar(9, 1),
                      0.3, 0.4, 20_000, seed=7)
    level = math.floor(0.6 * 9)
    assert rep.p_fail.successes == sum(rep.counts[: level + 1])
    assert sum(rep.counts) == 20_000 and len(rep.counts) == 10
    assert rep.bound_rhs is not None


def test_bound_absent_without_unit_rows_or_constant():
    rep = coord_count(RandomVectorModel.gaussian(3), Operator.diagonal([2, 1, 1]),
                      OrthonormalBasis.standard(3), 0.5, 0.5, 1000)
    assert rep.bound_rhs is None
    atom = RandomVectorModel.iid_density(3, [[0, 0], [0.5, 0], [1, 1]])
    rep = coord_count(atom, Operator.identity(3), OrthonormalBasis.standard(3), 0.5, 0.5, 1000)
    assert rep.bound_rhs is None


def test_coord_count_errors():
    with pytest.raises(InputError):
        coord_count(RandomVectorModel.gaussian(3), Operator.identity(3),
                    OrthonormalBasis.standard(4), 0.5, 0.5, 10)
    with pytest.raises(ParameterError):
        coord_count(RandomVectorModel.gaussian(3), Operator.identity(3),
                    OrthonormalBasis.standard(3), 0.0, 0.5, 10)
    with pytest.raises(ParameterError):
        coord_count(RandomVectorModel.gaussian(3), Operator.identity(3),
                    OrthonormalBasis.standard(3), 0.5, 1.0, 10)


# -- bound ---------------------------------------------------------------------

def test_csb_example_value():
    assert csb_bound_eval(4, 64, 32, 0.5, 0.05, 1.0) == pytest.approx(CSB_EXAMPLE, rel=1e-13)
    # exponent (1/2)(1/4)^2 32 = 1, base sqrt2 * 0.1
    assert CSB_EXAMPLE == pytest.approx(2 * 16 * 2 * math.sqrt(2) * 0.1, rel=1e-13)


def test_csb_monotone_and_vanishing():
    a = csb_bound_eval(4, 64, 32, 0.5, 0.05, 1.0)
    b = csb_bound_eval(4, 64, 64, 0.5, 0.05, 1.0)
    assert b < a
    assert csb_bound_eval(4, 64, 32, 0.5, 1e-30, 1.0) < 1e-25
    with pytest.raises(ParameterError):
        csb_bound_eval(2, 64, 32, 0.5, 0.05, 1.0)
    with pytest.raises(ParameterError):
        csb_bound_eval(4, 64, 32, 1.5, 0.05, 1.0)


# -- restricted invertibility ---------------------------------------------------

def test_identity_selection():
    sel = restricted_invertibility_select(np.eye(6), 6)
    assert sel.sigma == tuple(range(6)) and sel.certificate == pytest.approx(1.0)
    assert not sel.incomplete


def test_duplicate_column_against_brute_force():
    A = np.array([[1.0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    sel = restricted_invertibility_select(A, 3)
    assert sel.certificate == pytest.approx(1.0)
    assert not {0, 1} <= set(sel.sigma)
    best = max(smin(A, c) for c in itertools.combinations(range(4), 3))
    assert sel.certificate == pytest.approx(best)


def test_incomplete_flag():
    A = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    sel = restricted_invertibility_select(A, 2)
    assert sel.incomplete and len(sel.sigma) == 1


def test_certificate_is_independent_svd():
    A = np.random.default_rng(1).standard_normal((10, 30))
    sel = restricted_invertibility_select(A, 5)
    assert sel.certificate == pytest.approx(np.linalg.svd(A[:, sel.sigma], compute_uv=False)[-1],
                                            abs=1e-12)


def test_selection_errors():
    with pytest.raises(ParameterError):
        restricted_invertibility_select(np.zeros((3, 3)), 1)
    with pytest.raises(ParameterError):
        restricted_invertibility_select(np.eye(3), 4)


def test_guarantee_on_seeded_gaussians():
    hits = 0
    for seed in range(20):
        A = Operator.gaussian(48, 48, seed)
        target = int(stable_rank(A) // 2)
        sel = restricted_invertibility_select(A, target)
        hits += sel.certificate >= (1 - 1 / math.sqrt(2)) * schatten_norm(A, 2) / math.sqrt(48)
    assert hits >= 19


def test_subset_monotonicity_of_smin():
    # a sub-block of a certified block is at least as well conditioned
    M = unit_rows(24, 24, 3).T
    sel = restricted_invertibility_select(M, 8)
    rng = np.random.default_rng(0)
    for _ in range(50):
        tau = rng.choice(sel.sigma, size=rng.integers(1, 9), replace=False)
        assert smin(M, tau) >= sel.certificate * (1 - 1e-12)


# -- block decomposition --------------------------------------------------------

def test_orthonormal_family_single_block():
    U = np.linalg.qr(np.random.default_rng(2).standard_normal((12, 12)))[0]
    dec = block_decompose(U, OrthonormalBasis.standard(12), 0.5, 4.0)
    assert dec.blocks == (tuple(range(12)),)
    assert dec.certificates[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_block_invariants(seed):
    T = unit_rows(32, 40, seed)
    basis = OrthonormalBasis.standard(32)
    dec = block_decompose(T, basis, 0.5, 4.0)
    flat = [i for b in dec.blocks for i in b]
    assert len(flat) == len(set(flat)) and len(flat) >= 16
    cols = T.T
    for b, gamma, floor in zip(dec.blocks, dec.certificates, dec.step_floor):
        assert math.isfinite(gamma) and gamma > 0
        assert abs(gamma - 1 / np.linalg.svd(cols[:, list(b)], compute_uv=False)[-1]) <= 1e-8
        assert len(b) >= floor


def test_block_floor_uses_step_measurement():
    dec = block_decompose(unit_rows(40, 40, 9), OrthonormalBasis.standard(40), 0.5, 4.0)
    for k_hat, floor in zip(dec.step_k_hat, dec.step_floor):
        assert floor == math.floor(0.5 ** 2 * k_hat / 2)


def test_block_decompose_with_haar_basis():
    U = OrthonormalBasis.haar(16, 4)
    # T = U D with unit rows in the rotated basis: T^* u_i = rows of D-normalized matrix
    R = unit_rows(16, 20, 1)
    T = U.vectors @ R
    dec = block_decompose(T, U, 0.25, 6.0)
    assert dec.coverage >= 12


def test_block_precondition():
    with pytest.raises(PreconditionError, match="general_precondition_path"):
        block_decompose(np.diag([2.0, 1.0]), OrthonormalBasis.standard(2), 0.5, 4.0)
    with pytest.raises(ParameterError):
        block_decompose(np.eye(3), OrthonormalBasis.standard(3), 1.0, 4.0)


# -- general precondition ---------------------------------------------------------

def test_general_path_examples():
    sigma0, c0 = general_precondition_path(np.eye(5), OrthonormalBasis.standard(5), 0.5, 1.0)
    assert sigma0 == tuple(range(5)) and c0 == 1.0
    sigma0, c0 = general_precondition_path(np.diag([2.0, 1, 1, 1]), OrthonormalBasis.standard(4),
                                           1.0, 2.0)
    assert sigma0 == (0, 1, 2, 3) and c0 == 1.0
    T = np.vstack([np.eye(3, 4), np.zeros((1, 4))])
    sigma0, c0 = general_precondition_path(T, OrthonormalBasis.standard(4), 1.0, 2.0)
    assert sigma0 == (0, 1, 2) and c0 == 0.75


def test_general_path_violation_reports_measurement():
    T = np.diag([100.0, 0.01, 0.01, 0.01])
    with pytest.raises(PreconditionError) as err:
        general_precondition_path(T, OrthonormalBasis.standard(4), 1.0, 1.0)
    assert err.value.measured == pytest.approx((100 ** 3 / 4) ** (1 / 3), rel=1e-3)


# -- top-k norm ---------------------------------------------------------------------

def test_topk_examples():
    assert topk_norm([3, 2, 1], 2) == pytest.approx(math.sqrt(13))
    x = np.array([1.0, -4.0, 2.0])
    assert topk_norm(x, 3) == pytest.approx(np.linalg.norm(x))
    assert topk_norm(x, 1) == 4.0
    with pytest.raises(ParameterError):
        topk_norm(x, 0)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-1e3, 1e3)))
def test_topk_monotone_and_brute_force(x):
    vals = [topk_norm(x, k) for k in range(1, x.size + 1)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= np.linalg.norm(x) * (1 + 1e-12) + 1e-300
    if x.size <= 8:
        for k in range(1, x.size + 1):
            brute = max(np.linalg.norm(x[list(c)]) for c in itertools.combinations(range(x.size), k))
            assert vals[k - 1] == pytest.approx(brute, rel=1e-12, abs=1e-300)
