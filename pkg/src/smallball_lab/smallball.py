"""Small-ball probabilities and negative moments of ``||T X||_2``.

All estimators in this module draw ``X`` from the same random stream, so two
calls with the same ``(model, T, trials, seed)`` see the same sample of
``||T X||``.  Sweeps over thresholds, caps and the Markov-type comparison
between them are therefore exact statements about one empirical measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import rng as _rng
from .errors import InputError, ParameterError, PreconditionError
from .grassmann import a_k_estimate, gaussian_negative_moment
from .models import RandomVectorModel, sample_batch
from .operator import Operator, as_operator, schatten_norm
from .stats import (Z95, MomentEstimate, ProbabilityEstimate, chi_negative_moment,
                    fit_log_slope, mean_and_se, mean_estimate, neg_power,
                    probability_estimate)

NORM_STREAM = "norm_TX"
THRESHOLD_SCALES = ("hs_norm", "ak")


def sample_norms(model: RandomVectorModel, T, trials: int, seed: int = 0, threads=1,
                 stream: str = NORM_STREAM) -> np.ndarray:
    """``trials`` draws of ``||T X||_2``."""
    T = as_operator(T)
    if model.dim != T.cols:
        raise InputError(f"operator acts on R^{T.cols} but the model lives in R^{model.dim}")
    At = T.entries.T

    def block(rng, size):
        return np.linalg.norm(sample_batch(model, size, rng) @ At, axis=1)

    return _rng.sample_blocks(block, trials, seed, stream, threads)


@dataclass(frozen=True)
class SmallBallReport:
    epsilons: Tuple[float, ...]
    p_hats: Tuple[ProbabilityEstimate, ...]
    threshold_scale: str
    scale_value: float
    fitted_slope: float
    k: Optional[int] = None

    def oracle_inside(self, oracle: Sequence[float]) -> List[bool]:
        return [e.ci_low <= o <= e.ci_high for e, o in zip(self.p_hats, oracle)]


def _check_epsilons(epsilons) -> Tuple[float, ...]:
    eps = tuple(float(e) for e in epsilons)
    if not eps:
        raise ParameterError("need at least one epsilon")
    if any(e < 0 for e in eps):
        raise ParameterError("epsilon must be non-negative")
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise ParameterError("epsilons must be strictly increasing")
    return eps


def smallball_sweep(model: RandomVectorModel, T, epsilons: Sequence[float], trials: int,
                    seed: int = 0, threads=1, threshold_scale: str = "hs_norm",
                    k: Optional[int] = None, ak_trials: int = 100_000) -> SmallBallReport:
    """Empirical ``P(||T X|| <= eps * scale)`` for each ``eps`` on one sample set.

    ``threshold_scale='hs_norm'`` uses ``scale = ||T||_S2``; ``'ak'`` uses
    ``scale = sqrt(m) a_k(T)`` (``a_k`` exact for ``k = m``, otherwise a Monte
    Carlo estimate with ``ak_trials`` trials and a seed derived from ``seed``).
    """
    T = as_operator(T)
    eps = _check_epsilons(epsilons)
    if threshold_scale == "hs_norm":
        scale = schatten_norm(T, 2)
        if scale == 0:
            raise ParameterError("small-ball probability relative to the zero operator")
    elif threshold_scale == "ak":
        if k is None:
            raise ParameterError("threshold_scale 'ak' needs k")
        ak = a_k_estimate(T, k, ak_trials, _rng.derive_seed(seed, 1), threads).value
        scale = math.sqrt(T.rows) * ak
    else:
        raise ParameterError(f"threshold_scale must be one of {THRESHOLD_SCALES}")
    norms = np.sort(sample_norms(model, T, trials, seed, threads))
    hits = np.searchsorted(norms, np.asarray(eps) * scale, side="right")
    p_hats = tuple(probability_estimate(int(h), trials, seed) for h in hits)
    slope = fit_log_slope(eps, [p.p_hat for p in p_hats], trials)
    return SmallBallReport(eps, p_hats, threshold_scale, scale, slope, k)


def smallball_prob(model: RandomVectorModel, T, epsilon: float, trials: int, seed: int = 0,
                   threads=1) -> ProbabilityEstimate:
    """Empirical ``P(||T X||_2 <= eps ||T||_S2)`` with an exact binomial interval."""
    return smallball_sweep(model, T, [epsilon], trials, seed, threads).p_hats[0]


def corollary_bound_sweep(model: RandomVectorModel, T, k: int, epsilons: Sequence[float],
                          trials: int, seed: int = 0, threads=1,
                          ak_trials: int = 100_000) -> SmallBallReport:
    """Empirical ``P(||T X|| <= eps sqrt(m) a_k(T))`` over ``eps in (0, 1]``."""
    T = as_operator(T)
    if not 1 <= k <= T.rows:
        raise ParameterError(f"k must lie in [1, {T.rows}]")
    if any(not 0 < e <= 1 for e in epsilons):
        raise ParameterError("epsilons must lie in (0, 1]")
    return smallball_sweep(model, T, epsilons, trials, seed, threads, "ak", k, ak_trials)


@dataclass(frozen=True)
class NegativeMomentReport:
    """Capped negative moment with its cap-sensitivity triple.

    ``estimate`` is at ``cap``; ``at_low_cap``/``at_high_cap`` are the same
    sample evaluated at ``cap/10`` and ``cap*10``.
    """

    cap: float
    estimate: MomentEstimate
    at_low_cap: MomentEstimate
    at_high_cap: MomentEstimate

    @property
    def value(self) -> float:
        return self.estimate.value

    @property
    def cap_sensitivity(self) -> float:
        """Relative spread of the triple around the estimate at ``cap``."""
        v = self.estimate.value
        return (self.at_high_cap.value - self.at_low_cap.value) / v if v else math.inf


def capped_moments(norms: np.ndarray, k: int, caps: Sequence[float], seed: int) -> List[MomentEstimate]:
    raw = neg_power(norms, k)
    out = []
    for cap in caps:
        terms = np.minimum(raw, cap)
        clipped = float(np.count_nonzero(raw > cap))
        out.append(mean_estimate(math.fsum(terms), math.fsum(terms * terms), terms.size, k, seed,
                                 {"clipped": clipped, "cap": float(cap)}))
    return out


def negative_moment(model: RandomVectorModel, T, k: int, trials: int, cap: float = 1e6,
                    seed: int = 0, threads=1) -> NegativeMomentReport:
    """Monte-Carlo ``E min(||T X||^{-k}, cap)`` plus the cap-sensitivity triple."""
    T = as_operator(T)
    m = T.rank
    if not 1 <= k <= m - 1:
        raise ParameterError(f"negative moment order k={k} needs 1 <= k <= rank-1 = {m - 1}")
    if not cap > 0:
        raise ParameterError("cap must be positive")
    norms = sample_norms(model, T, trials, seed, threads)
    low, mid, high = capped_moments(norms, k, [cap / 10.0, cap, cap * 10.0], seed)
    return NegativeMomentReport(float(cap), mid, low, high)


def _gaussian_moment(T: Operator, k: int, trials: int, seed: int, threads):
    """``E ||T G||^{-k}`` and its standard error; closed form when ``T`` is a
    multiple of an isometry, Monte Carlo otherwise."""
    s = T.spectrum.nonzero
    if T.rank == T.rows and np.allclose(s, s[0], rtol=1e-12, atol=0):
        return chi_negative_moment(T.rank, k) * s[0] ** (-float(k)), 0.0, "oracle"
    est = gaussian_negative_moment(T, k, trials, _rng.derive_seed(seed, 2), threads)
    mean = est.value ** (-float(k))
    return mean, k * mean * est.rel_error, "monte_carlo"


@dataclass(frozen=True)
class ComparisonReport:
    """``E ||TX||^{-k}`` against ``E ||T G / (sqrt(2 pi) L)||^{-k}``."""

    k: int
    L: float
    lhs: NegativeMomentReport
    gaussian_moment: float
    gaussian_se: float
    gaussian_source: str

    @property
    def rhs(self) -> float:
        return (math.sqrt(2.0 * math.pi) * self.L) ** self.k * self.gaussian_moment

    @property
    def sigma(self) -> float:
        """Combined relative standard error of both sides."""
        a = self.lhs.estimate.rel_error
        b = self.gaussian_se / self.gaussian_moment if self.gaussian_moment else 0.0
        return math.hypot(a, b)

    def holds(self, n_sigma: float = 3.0) -> bool:
        return self.lhs.value <= self.rhs * (1.0 + n_sigma * self.sigma)


def comparison_check(model: RandomVectorModel, T, k: int, trials: int, cap: float = 1e6,
                     seed: int = 0, threads=1, L: Optional[float] = None) -> ComparisonReport:
    """Compare capped ``E ||TX||^{-k}`` with the Gaussian bound.

    ``L`` defaults to the model's marginal-density constant ``density_L``,
    the quantity the comparison is stated for.
    """
    T = as_operator(T)
    L = model.density_L if L is None else float(L)
    if L is None:
        raise PreconditionError("model declares no small-ball constant; pass L explicitly")
    lhs = negative_moment(model, T, k, trials, cap, seed, threads)
    g, g_se, source = _gaussian_moment(T, k, trials, seed, threads)
    return ComparisonReport(k, L, lhs, g, g_se, source)


@dataclass(frozen=True)
class TwoSidedReport:
    ratio: float
    ci_low: float
    ci_high: float
    band: Tuple[float, float]
    model_moment: MomentEstimate
    gaussian_moment: MomentEstimate

    @property
    def in_band(self) -> bool:
        return self.band[0] <= self.ratio <= self.band[1]


def logconcave_twosided_check(model: RandomVectorModel, T, k: int, trials: int, seed: int = 0,
                              threads=1, band: Tuple[float, float] = (1 / 3, 3.0)) -> TwoSidedReport:
    """Ratio ``(E||TX||^{-k})^{-1/k} / (E||TG||^{-k})^{-1/k}`` for log-concave ``X``."""
    if not model.is_log_concave:
        raise PreconditionError(f"model family '{model.family}' is not an isotropic log-concave family")
    T = as_operator(T)
    if not 1 <= k <= T.rank - 1:
        raise ParameterError(f"k must lie in [1, rank-1 = {T.rank - 1}]")
    x = neg_power(sample_norms(model, T, trials, seed, threads), k)
    g = neg_power(sample_norms(RandomVectorModel.gaussian(T.cols), T, trials, seed, threads,
                               stream="norm_TG"), k)
    mx, sx = mean_and_se(math.fsum(x), math.fsum(x * x), trials)
    mg, sg = mean_and_se(math.fsum(g), math.fsum(g * g), trials)
    # the ratio of means is exactly scale-free, so r(cT) == r(T) bit-for-bit
    ratio = (mx / mg) ** (-1.0 / k)
    rel = math.hypot(sx / mx, sg / mg) / k
    est_x = MomentEstimate(mx, mx - Z95 * sx, mx + Z95 * sx, trials, k, seed, sx)
    est_g = MomentEstimate(mg, mg - Z95 * sg, mg + Z95 * sg, trials, k, seed, sg)
    return TwoSidedReport(ratio, ratio * math.exp(-Z95 * rel), ratio * math.exp(Z95 * rel),
                          (float(band[0]), float(band[1])), est_x, est_g)
