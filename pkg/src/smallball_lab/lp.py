"""Dyadic level sets of a vector and the l_p small-ball experiment.

Indices enter block ``I_j`` when ``2^-(j+1) < |a_i| / |a|_max <= 2^-j``.
Membership is decided with ``math.ldexp`` comparisons, which are exact, so a
ratio sitting on a power of two always lands on the closed side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import rng as _rng
from .errors import DomainError, InputError, ParameterError
from .models import RandomVectorModel, sample_batch
from .stats import ProbabilityEstimate, fit_log_slope, probability_estimate


def _level(x: float, top: float) -> int:
    """Largest integer ``j`` with ``x * 2^j <= top``; ``0 < x <= top``."""
    j = max(0, int(math.floor(math.log2(top) - math.log2(x))))
    while j > 0 and math.ldexp(x, j) > top:
        j -= 1
    while math.ldexp(x, j + 1) <= top:
        j += 1
    return j


@dataclass(frozen=True)
class DyadicDecomposition:
    a: Tuple[float, ...]
    p: float
    order: Tuple[int, ...]
    blocks: Dict[int, Tuple[int, ...]]
    lambda_sets: Dict[int, Tuple[int, ...]]
    j_of_ell: Dict[int, int]

    @property
    def top(self) -> float:
        return abs(self.a[self.order[0]])

    def block_sum(self, j: int) -> float:
        return math.fsum(abs(self.a[i]) ** self.p for i in self.blocks.get(j, ()))

    def _scaled_sum(self, idx) -> float:
        # relative to the top entry so tiny or huge vectors neither underflow nor overflow
        top = self.top
        return math.fsum((abs(self.a[i]) / top) ** self.p for i in idx)

    def _phi_scaled(self, k: int) -> float:
        return math.fsum(self._scaled_sum(self.blocks.get(self.j_of_ell[ell], ()))
                         for ell, js in self.lambda_sets.items() if ell >= k and js)

    def phi(self, k: int) -> float:
        """``(sum_{l >= k, Lambda_l nonempty} sum_{i in I_{j(l)}} |a_i|^p)^{1/p}``."""
        return self.top * self._phi_scaled(k) ** (1.0 / self.p)

    def lp_norm_p(self) -> float:
        return math.fsum(abs(v) ** self.p for v in self.a)

    def compression_factor(self) -> float:
        """``phi(1)^p / ||a||_p^p``, the share kept by the representative blocks."""
        return self._phi_scaled(1) / self._scaled_sum(self.order)

    def membership_holds(self) -> bool:
        top = self.top
        for j, idx in self.blocks.items():
            for i in idx:
                x = abs(self.a[i])
                if not (math.ldexp(x, j) <= top < math.ldexp(x, j + 1)):
                    return False
        return True

    def partition_holds(self) -> bool:
        seen = [i for idx in self.blocks.values() for i in idx]
        support = {i for i, v in enumerate(self.a) if v != 0}
        return len(seen) == len(set(seen)) and set(seen) == support

    def sandwich_holds(self) -> bool:
        """``2^-p |I_j| (a_1/2^j)^p < sum_{I_j} |a_i|^p <= |I_j| (a_1/2^j)^p`` for every ``j``.

        Exact rational arithmetic for integer ``p``; otherwise floating point.
        """
        if float(self.p).is_integer():
            p = int(self.p)
            top = Fraction(self.top)
            for j, idx in self.blocks.items():
                level = (top / 2 ** j) ** p
                s = sum(Fraction(abs(self.a[i])) ** p for i in idx)
                if not (level * len(idx) / 2 ** p < s <= level * len(idx)):
                    return False
            return True
        for j, idx in self.blocks.items():
            level = (self.top / 2.0 ** j) ** self.p
            s = self.block_sum(j)
            if not (level * len(idx) / 2.0 ** self.p < s <= level * len(idx) * (1 + 1e-12)):
                return False
        return True


def dyadic_decompose(a, p: float) -> DyadicDecomposition:
    a = np.asarray(a, dtype=float).ravel()
    if not p >= 1 or math.isinf(p):
        raise ParameterError(f"p must be a finite real >= 1, got {p}")
    if not np.all(np.isfinite(a)):
        raise InputError("vector entries must be finite")
    mags = np.abs(a)
    if not np.any(mags > 0):
        raise DomainError("dyadic decomposition of the zero vector")
    order = tuple(int(i) for i in np.lexsort((np.arange(a.size), -mags)) if mags[i] > 0)
    top = float(mags[order[0]])
    blocks: Dict[int, List[int]] = {}
    for i in order:
        blocks.setdefault(_level(float(mags[i]), top), []).append(i)
    frozen = {j: tuple(idx) for j, idx in sorted(blocks.items())}
    lambda_sets: Dict[int, List[int]] = {}
    for j, idx in frozen.items():
        lambda_sets.setdefault(len(idx), []).append(j)
    n = a.size
    lam = {ell: tuple(lambda_sets.get(ell, ())) for ell in range(1, n + 1)}
    j_of_ell = {ell: (min(js) if js else 0) for ell, js in lam.items()}
    return DyadicDecomposition(tuple(float(v) for v in a), float(p), order, frozen, lam, j_of_ell)


@dataclass(frozen=True)
class LpReport:
    p: float
    epsilons: Tuple[float, ...]
    p_hats: Tuple[ProbabilityEstimate, ...]
    k_hat: float
    c1: float
    slope: float


def lp_norm(x: np.ndarray, p: float, axis=-1) -> np.ndarray:
    return np.sum(np.abs(x) ** p, axis=axis) ** (1.0 / p)


def lp_smallball_experiment(model: RandomVectorModel, a, p: float, epsilons: Sequence[float],
                            trials: int, seed: int = 0, threads=1, c1: float = 1.0) -> LpReport:
    """Empirical ``P(||(a_i x_i)_i||_p <= eps ||a||_p)`` on shared samples.

    ``k_hat = (c1 ||a||_p / ||a||_inf)^p``; ``c1`` defaults to 1.
    """
    a = np.asarray(a, dtype=float).ravel()
    if not p >= 1 or math.isinf(p):
        raise ParameterError(f"p must be a finite real >= 1, got {p}")
    if model.dim != a.size:
        raise InputError(f"model has dim {model.dim}, vector has length {a.size}")
    eps = tuple(float(e) for e in epsilons)
    if not eps or any(not 0 < e < 1 for e in eps):
        raise ParameterError("epsilon must lie in (0, 1)")
    if any(b <= x for x, b in zip(eps, eps[1:])):
        raise ParameterError("epsilons must be strictly increasing")
    norm_a = float(lp_norm(a, p))
    if norm_a == 0:
        raise DomainError("l_p experiment with the zero vector")

    def block(rng, size):
        return lp_norm(sample_batch(model, size, rng) * a, p)

    stats = np.sort(_rng.sample_blocks(block, trials, seed, "lp", threads))
    hits = np.searchsorted(stats, np.asarray(eps) * norm_a, side="right")
    p_hats = tuple(probability_estimate(int(h), trials, seed) for h in hits)
    k_hat = (c1 * norm_a / float(np.max(np.abs(a)))) ** p
    slope = fit_log_slope(eps, [e.p_hat for e in p_hats], trials)
    return LpReport(float(p), eps, p_hats, k_hat, float(c1), slope)
