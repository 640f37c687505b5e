"""Dense real operators, singular spectra, Schatten norms and stable ranks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

from .errors import DomainError, InputError, ParameterError

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SingularSpectrum:
    """Full singular spectrum (``min(m, n)`` values, non-increasing)."""

    values: np.ndarray
    rank: int
    tolerance: float

    @classmethod
    def from_values(cls, values) -> "SingularSpectrum":
        values = np.sort(np.maximum(np.asarray(values, dtype=float), 0.0))[::-1]
        values.setflags(write=False)
        tol = RANK_RTOL * values[0] if values.size and values[0] > 0 else 0.0
        return cls(values, int(np.count_nonzero(values > tol)), float(tol))

    @property
    def nonzero(self) -> np.ndarray:
        return self.values[: self.rank]


@dataclass(frozen=True, eq=False)
class Operator:
    """A real ``m x n`` matrix ``T: R^n -> R^m`` with its spectrum precomputed.

    The spectrum is computed at construction so instances are immutable and
    can be shared freely between threads.
    """

    entries: np.ndarray
    spectrum: SingularSpectrum = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise InputError(f"operator needs a non-empty 2-D matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InputError("operator entries must be finite (found NaN or Inf)")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        s = np.linalg.svd(a, compute_uv=False)
        object.__setattr__(self, "spectrum", SingularSpectrum.from_values(s))

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    @property
    def rank(self) -> int:
        return self.spectrum.rank

    @property
    def T(self) -> "Operator":
        return Operator(self.entries.T)

    def __mul__(self, c: float) -> "Operator":
        return Operator(float(c) * self.entries)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            return Operator(self.entries @ other.entries)
        return self.entries @ np.asarray(other, dtype=float)

    def __rmatmul__(self, other):
        return Operator(np.asarray(other, dtype=float) @ self.entries)

    def hs_norm(self) -> float:
        return schatten_norm(self, 2)

    # -- constructors -----------------------------------------------------
    @classmethod
    def identity(cls, m: int) -> "Operator":
        return cls(np.eye(int(m)))

    @classmethod
    def diagonal(cls, values: Sequence[float]) -> "Operator":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def gaussian(cls, rows: int, cols: int, seed: int) -> "Operator":
        """Standard Gaussian ensemble, reproducible from ``seed``."""
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((int(rows), int(cols))))

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Operator":
        """Load a matrix from a CSV file: one matrix row per line, comma separated."""
        path = Path(path)
        rows: List[List[float]] = []
        with path.open() as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append([float(tok) for tok in line.split(",")])
                except ValueError as exc:
                    raise InputError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise InputError(f"{path}: empty matrix file")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise InputError(f"{path}: ragged rows (lengths {sorted(widths)})")
        return cls(np.array(rows))

    def to_csv(self, path: Union[str, Path]) -> None:
        with Path(path).open("w", newline="\n") as fh:
            for row in self.entries:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def as_operator(T) -> Operator:
    return T if isinstance(T, Operator) else Operator(T)


def singular_values(T) -> SingularSpectrum:
    return as_operator(T).spectrum


def schatten_norm(T, q: float) -> float:
    """``(sum s_i^q)^(1/q)``; ``q = inf`` gives the operator norm."""
    q = float(q)
    if not q >= 1:
        raise ParameterError(f"Schatten index must be >= 1, got {q}")
    s = singular_values(T).values
    if s.size == 0 or s[0] == 0.0:
        return 0.0
    if math.isinf(q):
        return float(s[0])
    # scale by s_1 to avoid overflow for large q
    return float(s[0] * np.sum((s / s[0]) ** q) ** (1.0 / q))


def stable_rank_q(T, q: float) -> float:
    """``(||T||_S2 / ||T||_Sq)^(2q/(q-2))`` for ``q in (2, inf]``."""
    q = float(q)
    if not q > 2:
        raise ParameterError(f"q-stable rank needs q > 2, got {q}")
    T = as_operator(T)
    if T.spectrum.values[0] == 0.0:
        raise DomainError("stable rank of the zero operator is undefined")
    ratio = schatten_norm(T, 2) / schatten_norm(T, q)
    if math.isinf(q):
        return ratio * ratio
    return ratio ** (2.0 * q / (q - 2.0))


def stable_rank(T) -> float:
    return stable_rank_q(T, math.inf)


def truncate_spectrum(T, m: int) -> np.ndarray:
    """Nonzero singular values capped at ``||T||_S2 / sqrt(m)``, order kept."""
    T = as_operator(T)
    if T.spectrum.values[0] == 0.0:
        raise DomainError("cannot truncate the spectrum of the zero operator")
    if int(m) < 1:
        raise ParameterError(f"truncation level must be >= 1, got {m}")
    cap = schatten_norm(T, 2) / math.sqrt(int(m))
    return np.minimum(T.spectrum.nonzero, cap)


def truncation_level(T, theta: float, q: float, c: float = 1.0) -> int:
    """``floor((c theta)^(2q/(q-2)) srank_q(T))``; may be 0 for small operators.

    With ``c <= sqrt((q-2)/q)`` the head of the spectrum up to this level
    carries at most ``theta^2 ||T||_S2^2``, so :func:`truncate_spectrum`
    retains at least ``(1 - theta^2) ||T||_S2^2``.
    """
    q = float(q)
    if math.isinf(q):
        power = 2.0
    else:
        power = 2.0 * q / (q - 2.0)
    return int(math.floor((c * theta) ** power * stable_rank_q(T, q)))
