"""Haar subspaces and Monte-Carlo Grassmannian determinant averages.

``a_k(T)`` for a surjective ``T: R^n -> R^m`` and ``k < m`` is the ``-1/k``
power of the Haar average over ``k``-dimensional ``F`` of
``det[(P_F T)(P_F T)^*]^{-1/2}``; for ``k = m`` it is ``det(T T^*)^{1/(2m)}``.
It links to Gaussian negative moments through

    (E ||T G||^{-k})^{-1/k} = a_k(T) (E ||G_m||^{-k})^{-1/k},

which :func:`gaussian_negative_moment` and :func:`a_k_estimate` let one test
from two independent Monte-Carlo routes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .errors import ParameterError
from .operator import RANK_RTOL, as_operator
from .stats import MomentEstimate, inverse_power_estimate, mean_and_se, neg_power


@dataclass(frozen=True)
class SubspaceSample:
    """An ``m x k`` frame with orthonormal columns spanning ``F``."""

    frame: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.frame.shape[0]

    @property
    def k(self) -> int:
        return self.frame.shape[1]

    def projector(self) -> np.ndarray:
        return self.frame @ self.frame.T

    @classmethod
    def coordinate(cls, m: int, indices) -> "SubspaceSample":
        """Span of the standard basis vectors ``e_i`` for ``i`` in ``indices``."""
        return cls(np.eye(m)[:, list(indices)])


def _check_dims(m: int, k: int) -> None:
    if not 1 <= k <= m:
        raise ParameterError(f"subspace dimension must satisfy 1 <= k <= m, got k={k}, m={m}")


def haar_frames(m: int, k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent Haar ``k``-frames in ``R^m``, shape ``(size, m, k)``.

    Gaussian matrix followed by QR with the diagonal of ``R`` made positive;
    the sign fix makes the map from Gaussian draws to frames deterministic.
    """
    _check_dims(m, k)
    g = rng.standard_normal((size, m, k))
    if k == 1:
        return g / np.linalg.norm(g, axis=1, keepdims=True)
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    return q * signs[:, None, :]


def sample_subspace(m: int, k: int, rng: np.random.Generator) -> SubspaceSample:
    return SubspaceSample(haar_frames(m, k, 1, rng)[0])


def _check_surjective(T, k: int):
    T = as_operator(T)
    m = T.rows
    if T.rank != m:
        raise ParameterError(f"a_k needs rank(T) = m = {m}, got rank {T.rank}")
    if not 1 <= k <= m:
        raise ParameterError(f"k must lie in [1, {m}], got {k}")
    return T, m


def a_m_exact(T) -> float:
    """``det(T T^*)^{1/(2m)}`` from the singular values of ``T``."""
    T, m = _check_surjective(T, as_operator(T).rows)
    return float(math.exp(np.sum(np.log(T.spectrum.nonzero)) / m))


def a_k_estimate(T, k: int, trials: int = 100_000, seed: int = 0, threads=1) -> MomentEstimate:
    """Monte-Carlo ``a_k(T)`` over Haar-random ``k``-subspaces of ``R^m``.

    Each trial's determinant term is ``prod_i 1/sigma_i(Q^T T)`` for a Haar
    frame ``Q``.  Singular values below the operator rank tolerance are
    clamped to it and counted in ``diagnostics['singular_samples']``.
    ``diagnostics['max_term_ratio']`` (largest term over the mean) flags heavy
    tails.  For ``k = m`` the exact value is returned with a zero-width
    interval.
    """
    T, m = _check_surjective(T, k)
    if k == m:
        v = a_m_exact(T)
        return MomentEstimate(v, v, v, 1, k, int(seed), 0.0, {"exact": 1.0})
    if trials < 100:
        raise ParameterError(f"a_k_estimate needs trials >= 100, got {trials}")
    A = T.entries
    floor = RANK_RTOL * T.spectrum.values[0]

    def block(rng, size):
        q = haar_frames(m, k, size, rng)
        proj = np.einsum("bmk,mn->bkn", q, A)
        sv = np.linalg.svd(proj, compute_uv=False)
        low = sv < floor
        terms = np.exp(-np.sum(np.log(np.maximum(sv, floor)), axis=1))
        return terms.sum(), (terms * terms).sum(), terms.max(), int(low.any(axis=1).sum())

    parts = _rng.map_blocks(block, trials, seed, f"a_k/{k}", threads)
    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    mean, se = mean_and_se(total, total_sq, trials)
    diag = {
        "singular_samples": float(sum(p[3] for p in parts)),
        "max_term_ratio": max(p[2] for p in parts) / mean,
    }
    return inverse_power_estimate(mean, se, trials, k, seed, diag)


def gaussian_negative_moment(T, k: int, trials: int = 100_000, seed: int = 0,
                             threads=1) -> MomentEstimate:
    """Monte-Carlo ``(E ||T G||^{-k})^{-1/k}`` for standard Gaussian ``G``.

    Requires ``1 <= k <= rank(T) - 1`` so that the moment is finite.
    """
    T = as_operator(T)
    m = T.rank
    if not 1 <= k <= m - 1:
        raise ParameterError(f"negative moment of order {k} needs 1 <= k <= rank-1 = {m - 1}")
    if trials < 100:
        raise ParameterError(f"gaussian_negative_moment needs trials >= 100, got {trials}")
    At = T.entries.T

    def block(rng, size):
        g = rng.standard_normal((size, T.cols))
        terms = neg_power(np.linalg.norm(g @ At, axis=1), k)
        return terms.sum(), (terms * terms).sum(), terms.max()

    parts = _rng.map_blocks(block, trials, seed, f"gauss_neg/{k}", threads)
    total = math.fsum(p[0] for p in parts)
    total_sq = math.fsum(p[1] for p in parts)
    mean, se = mean_and_se(total, total_sq, trials)
    diag = {"max_term_ratio": max(p[2] for p in parts) / mean}
    return inverse_power_estimate(mean, se, trials, k, seed, diag)
