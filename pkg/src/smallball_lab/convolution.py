"""Circular convolution, Fourier profiles and sub-sampled separation experiments.

Convention: ``(a * xi)_i = sum_j a_j xi_{(j - i) mod n}`` with 0-based indices,
so a delta at index 0 returns ``xi`` index-reversed.  The unitary complex DFT
diagonalizes this operator; the Walsh-Hadamard transform is offered only for
norm profiles.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as _sps

from . import rng as _rng
from .errors import DomainError, InputError, ParameterError
from .models import RandomVectorModel, sample_batch
from .stats import ProbabilityEstimate, probability_estimate

UNIT_TOL = 1e-10


def _pair(a, xi) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if a.ndim != 1 or a.shape[-1] != xi.shape[-1]:
        raise InputError(f"length mismatch: a has shape {a.shape}, xi has shape {xi.shape}")
    return a, xi


def circular_convolve(a, xi) -> np.ndarray:
    """FFT convolution; ``xi`` may be a batch with signals along the last axis."""
    a, xi = _pair(a, xi)
    n = a.size
    return np.fft.irfft(np.fft.rfft(a) * np.conj(np.fft.rfft(xi, axis=-1)), n, axis=-1)


def direct_convolve(a, xi, indices: Optional[Sequence[int]] = None) -> np.ndarray:
    """The defining ``O(n^2)`` sum, optionally only at ``indices``."""
    a, xi = _pair(a, xi)
    n = a.size
    idx = range(n) if indices is None else indices
    return np.array([float(np.dot(a, np.roll(xi, i))) for i in idx])


def circulant_matvec(a, x) -> np.ndarray:
    """``Gamma_a x`` through ``sqrt(n) F^* diag(F a) R F`` with ``R`` the frequency reversal."""
    a, x = _pair(a, x)
    n = a.size
    a_hat = np.fft.fft(a, norm="ortho")
    x_hat = np.fft.fft(x, norm="ortho")
    rev = (-np.arange(n)) % n
    return np.fft.ifft(math.sqrt(n) * a_hat * x_hat[rev], norm="ortho").real


def fwht(x) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform (Sylvester order); length a power of 2."""
    y = np.array(x, dtype=float, copy=True)
    n = y.size
    if n & (n - 1):
        raise ParameterError(f"Walsh-Hadamard transform needs a power-of-two length, got {n}")
    h = 1
    while h < n:
        y = y.reshape(-1, 2, h)
        y = np.stack((y[:, 0] + y[:, 1], y[:, 0] - y[:, 1]), axis=1).reshape(n)
        h *= 2
    return y / math.sqrt(n)


@dataclass(frozen=True)
class FourierProfile:
    a_hat: np.ndarray
    q_norms: Dict[float, float]
    srank_q_gamma: Dict[float, float]
    transform: str = "dft"


def _lq(v: np.ndarray, q: float) -> float:
    top = float(v.max())
    if math.isinf(q):
        return top
    return top * float(np.sum((v / top) ** q)) ** (1.0 / q)


def fourier_profile(a, qs: Sequence[float] = (4.0, math.inf), transform: str = "dft") -> FourierProfile:
    """``a_hat`` (unitary), ``||a_hat||_q`` and ``srank_q(Gamma_a) = ||a_hat||_q^{-2q/(q-2)}``."""
    a = np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(a))
    if norm == 0:
        raise DomainError("Fourier profile of the zero vector")
    if abs(norm - 1.0) > UNIT_TOL:
        raise ParameterError(f"a must have unit Euclidean norm, got {norm!r}")
    if transform == "dft":
        a_hat = np.fft.fft(a, norm="ortho")
    elif transform == "walsh":
        a_hat = fwht(a).astype(complex)
    else:
        raise ParameterError("transform must be 'dft' or 'walsh'")
    mod = np.abs(a_hat)
    q_norms, sranks = {}, {}
    for q in qs:
        q = float(q)
        if not q > 2:
            raise ParameterError(f"q must exceed 2, got {q}")
        v = _lq(mod, q)
        q_norms[q] = v
        sranks[q] = v ** -2.0 if math.isinf(q) else v ** (-2.0 * q / (q - 2.0))
    a_hat.setflags(write=False)
    return FourierProfile(a_hat, q_norms, sranks, transform)


def subsample(v, delta: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Keep each index independently with probability ``delta``."""
    if not 0 <= delta <= 1:
        raise ParameterError(f"delta must lie in [0, 1], got {delta}")
    v = np.asarray(v)
    idx = np.flatnonzero(rng.random(v.shape[-1]) < delta)
    return idx, v[..., idx]


def sparse_unit_vector(n: int, s: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random support of size ``s``, iid Gaussian entries, unit norm."""
    if not 1 <= s <= n:
        raise ParameterError(f"sparsity must lie in [1, {n}], got {s}")
    a = np.zeros(n)
    support = rng.choice(n, size=s, replace=False)
    vals = rng.standard_normal(s)
    while not np.all(vals != 0):
        vals = rng.standard_normal(s)
    a[support] = vals
    return a / np.linalg.norm(a)


@dataclass(frozen=True, eq=False)
class ConvolutionEnsemble:
    a: np.ndarray
    delta: float
    xi_model: RandomVectorModel

    def __post_init__(self):
        a = np.array(self.a, dtype=float, copy=True)
        if a.ndim != 1:
            raise InputError("a must be a vector")
        if abs(float(np.linalg.norm(a)) - 1.0) > UNIT_TOL:
            raise ParameterError("a must have unit Euclidean norm")
        if not 0 < self.delta <= 1:
            raise ParameterError(f"delta must lie in (0, 1], got {self.delta}")
        if self.xi_model.dim != a.size:
            raise InputError(f"xi model has dim {self.xi_model.dim}, signal length is {a.size}")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def s(self) -> int:
        return int(np.count_nonzero(self.a))

    @classmethod
    def sparse(cls, n: int, s: int, delta: float, xi_model: RandomVectorModel,
               seed: int) -> "ConvolutionEnsemble":
        a = sparse_unit_vector(n, s, _rng.block_generator(seed, "conv/sparse_a", 0))
        return cls(a, float(delta), xi_model)


@dataclass(frozen=True)
class SeparationReport:
    epsilon: float
    q: float
    p_E1: ProbabilityEstimate
    p_E2: ProbabilityEstimate
    exponent_new: float
    exponent_old: float
    mean_count: float
    count_se: float
    kappa1: float
    kappa2: float


def separation_sweep(ens: ConvolutionEnsemble, epsilons: Sequence[float], trials: int,
                     seed: int = 0, threads=1, q: float = 4.0, kappa1: float = 0.5,
                     kappa2: float = 0.5) -> List[SeparationReport]:
    """Events ``E1``/``E2`` at several ``epsilon`` on one shared sample set.

    ``E1``: ``sum_{i in I} c_i^2 >= kappa1 eps^2 delta n``;
    ``E2``: ``#{i in I : |c_i| >= eps} >= kappa2 delta n`` with ``c = a * xi``.
    ``mean_count`` is the average of ``#{i in I : |c_i| >= eps}``.
    """
    eps = np.asarray([float(e) for e in epsilons])
    if eps.size == 0 or np.any(eps <= 0) or np.any(eps >= 1):
        raise ParameterError("epsilon must lie in (0, 1)")
    n, delta = ens.n, ens.delta
    profile = fourier_profile(ens.a, (q,))
    exponent_new = profile.srank_q_gamma[float(q)]
    exponent_old = min(n / ens.s, delta * n)

    def block(rng, size):
        xi = sample_batch(ens.xi_model, size, rng)
        mask = rng.random((size, n)) < delta
        c = circular_convolve(ens.a, xi)
        energy = np.sum(np.where(mask, c * c, 0.0), axis=1)
        absc = np.where(mask, np.abs(c), -1.0)
        e1 = np.array([np.count_nonzero(energy >= kappa1 * e * e * delta * n) for e in eps])
        cnt = np.stack([np.count_nonzero(absc >= e, axis=1) for e in eps])
        e2 = np.count_nonzero(cnt >= kappa2 * delta * n, axis=1)
        return e1, e2, cnt.sum(axis=1), (cnt.astype(float) ** 2).sum(axis=1)

    parts = _rng.map_blocks(block, trials, seed, "conv/separation", threads)
    e1 = np.sum([p[0] for p in parts], axis=0)
    e2 = np.sum([p[1] for p in parts], axis=0)
    s1 = np.sum([p[2] for p in parts], axis=0).astype(float)
    s2 = np.sum([p[3] for p in parts], axis=0)
    out = []
    for j, e in enumerate(eps):
        mean = s1[j] / trials
        var = max(s2[j] / trials - mean * mean, 0.0) * trials / max(trials - 1, 1)
        out.append(SeparationReport(float(e), float(q), probability_estimate(int(e1[j]), trials, seed),
                                    probability_estimate(int(e2[j]), trials, seed),
                                    exponent_new, exponent_old, mean, math.sqrt(var / trials),
                                    float(kappa1), float(kappa2)))
    return out


def separation_experiment(ens: ConvolutionEnsemble, epsilon: float, trials: int, seed: int = 0,
                          threads=1, q: float = 4.0, kappa1: float = 0.5,
                          kappa2: float = 0.5) -> SeparationReport:
    return separation_sweep(ens, [epsilon], trials, seed, threads, q, kappa1, kappa2)[0]


def gaussian_count_mean(n: int, delta: float, epsilon: float) -> float:
    """``E #{i in I : |c_i| >= eps}`` when every ``c_i`` is standard normal."""
    return n * delta * 2.0 * float(_sps.norm.sf(epsilon))
