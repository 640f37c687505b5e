"""Estimate containers, exact binomial intervals and small numeric helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import ParameterError

Z95 = 1.959963984540054


@dataclass(frozen=True)
class ProbabilityEstimate:
    """Monte-Carlo probability with an exact (Clopper-Pearson) 95% interval."""

    p_hat: float
    ci_low: float
    ci_high: float
    trials: int
    seed: int
    successes: int = 0

    @property
    def std_error(self) -> float:
        p = self.p_hat
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.trials)


@dataclass(frozen=True)
class MomentEstimate:
    """Monte-Carlo moment-type estimate.

    ``std_error`` is the (approximate) standard error of ``value``; the 95%
    interval ``[ci_low, ci_high]`` is built from it.  ``diagnostics`` carries
    estimator-specific counters (singular samples, max-term ratio, ...).
    """

    value: float
    ci_low: float
    ci_high: float
    trials: int
    k: int
    seed: int
    std_error: float = 0.0
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def rel_error(self) -> float:
        return self.std_error / abs(self.value) if self.value else math.inf


def clopper_pearson(successes: int, trials: int, level: float = 0.95):
    """Exact two-sided binomial interval for ``successes`` out of ``trials``."""
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ParameterError("successes must lie in [0, trials]")
    alpha = 1.0 - level
    lo = 0.0 if successes == 0 else stats.beta.ppf(alpha / 2, successes, trials - successes + 1)
    hi = 1.0 if successes == trials else stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes)
    return float(lo), float(hi)


def probability_estimate(successes: int, trials: int, seed: int) -> ProbabilityEstimate:
    successes = int(successes)
    lo, hi = clopper_pearson(successes, trials)
    return ProbabilityEstimate(successes / trials, lo, hi, int(trials), int(seed), successes)


def mean_and_se(total: float, total_sq: float, n: int):
    """Sample mean and its standard error from running sums."""
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, math.sqrt(var / n)


def mean_estimate(total, total_sq, n, k, seed, diagnostics=None) -> MomentEstimate:
    """Normal-approximation interval for a plain Monte-Carlo mean."""
    mean, se = mean_and_se(total, total_sq, n)
    return MomentEstimate(mean, mean - Z95 * se, mean + Z95 * se, int(n), int(k),
                          int(seed), se, dict(diagnostics or {}))


def inverse_power_estimate(mean, se_mean, n, k, seed, diagnostics=None) -> MomentEstimate:
    """Turn a mean ``mu`` of negative-moment terms into ``mu**(-1/k)``.

    Delta method on the log scale: ``log(value) = -log(mu)/k`` has standard
    error ``se_mean / (k mu)``.  The interval is exponentiated back, which
    keeps it positive and asymmetric the way the power map is.
    """
    value = mean ** (-1.0 / k)
    rel = se_mean / (k * mean)
    lo, hi = value * math.exp(-Z95 * rel), value * math.exp(Z95 * rel)
    return MomentEstimate(value, lo, hi, int(n), int(k), int(seed), value * rel,
                          dict(diagnostics or {}))


def chi_negative_moment(m: int, k: float) -> float:
    """E ||G_m||^{-k} = 2^{-k/2} Gamma((m-k)/2) / Gamma(m/2), finite for k < m."""
    if not k < m:
        raise ParameterError(f"E||G_m||^-k diverges unless k < m (m={m}, k={k})")
    return math.exp(-0.5 * k * math.log(2.0) + special.gammaln((m - k) / 2.0)
                    - special.gammaln(m / 2.0))


def chi_oracle(m: int, k: float) -> float:
    """(E ||G_m||^{-k})^{-1/k}."""
    return chi_negative_moment(m, k) ** (-1.0 / k)


def fit_log_slope(x: Sequence[float], p: Sequence[float], trials: Optional[int] = None) -> float:
    """Least-squares slope of log p against log x.

    With ``trials`` given, only points with ``10/trials <= p <= 0.5`` enter the
    fit.  Returns NaN when fewer than two points qualify.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    keep = (p > 0) & (x > 0)
    if trials is not None:
        keep &= (p >= 10.0 / trials) & (p <= 0.5)
    if keep.sum() < 2:
        return math.nan
    lx, lp = np.log(x[keep]), np.log(p[keep])
    dx = lx - lx.mean()
    denom = float(dx @ dx)
    if denom == 0.0:
        return math.nan
    return float(dx @ (lp - lp.mean()) / denom)


def neg_power(x: np.ndarray, k) -> np.ndarray:
    """``x ** -k``; integer ``k`` uses repeated products and one reciprocal.

    Every step is a correctly rounded multiply, so scaling ``x`` by a power of
    two scales the result by the matching power exactly.
    """
    x = np.asarray(x, dtype=float)
    if float(k) == int(k) and int(k) >= 1:
        out = x.copy()
        for _ in range(int(k) - 1):
            out *= x
        with np.errstate(divide="ignore"):
            return 1.0 / out
    with np.errstate(divide="ignore"):
        return x ** (-float(k))
