"""Coordinate small-ball counts, restricted invertibility and block decompositions."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as _sps

from . import rng as _rng
from .errors import InputError, ParameterError, PreconditionError
from .grassmann import haar_frames
from .models import RandomVectorModel, sample_batch
from .operator import Operator, as_operator, schatten_norm, stable_rank, stable_rank_q
from .stats import ProbabilityEstimate, probability_estimate

UNIT_NORM_TOL = 1e-8
BASIS_TOL = 1e-10
GREEDY_FALLBACK_MAX_M = 24
RANK_FLOOR = 1e-20


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    vectors: np.ndarray

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise InputError(f"basis must be a square matrix, got shape {v.shape}")
        if not np.allclose(v.T @ v, np.eye(v.shape[0]), rtol=0, atol=BASIS_TOL):
            raise InputError("basis vectors are not orthonormal within 1e-10")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def standard(cls, m: int) -> "OrthonormalBasis":
        return cls(np.eye(int(m)))

    @classmethod
    def haar(cls, m: int, seed: int) -> "OrthonormalBasis":
        gen = _rng.block_generator(seed, "basis/haar", 0)
        return cls(haar_frames(int(m), int(m), 1, gen)[0])


@dataclass(frozen=True)
class CoordCountReport:
    theta: float
    s: float
    m: int
    counts: Tuple[int, ...]
    p_fail: ProbabilityEstimate
    bound_rhs: Optional[float]
    k_q: Optional[float] = None

    @property
    def trials(self) -> int:
        return sum(self.counts)

    @property
    def distribution(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.trials

    @property
    def fail_level(self) -> int:
        return int(math.floor((1.0 - self.s) * self.m))

    def mean_count(self) -> float:
        return float(np.dot(np.arange(self.m + 1), self.distribution))

    def tv_distance(self, pmf: Sequence[float]) -> float:
        return 0.5 * float(np.sum(np.abs(self.distribution - np.asarray(pmf, dtype=float))))


def csb_constant(q: float) -> float:
    return math.sqrt(q / (q - 2.0))


def csb_bound_eval(q: float, m: float, k_q: float, s: float, theta: float, L: float) -> float:
    """Right-hand side of the coordinate small-ball bound, up to absolute constants.

    ``2 (2/s)^{q/(q-2)} (m/k_q) (c_q L theta / s)^{(1/2)(s/2)^{q/(q-2)} k_q}``
    with ``c_q = sqrt(q/(q-2))``.
    """
    if not q > 2:
        raise ParameterError(f"q must exceed 2, got {q}")
    if not 0 < s < 1:
        raise ParameterError(f"s must lie in (0, 1), got {s}")
    if min(m, k_q, theta, L) <= 0:
        raise ParameterError("m, k_q, theta and L must be positive")
    r = q / (q - 2.0)
    base = csb_constant(q) * L * theta / s
    exponent = 0.5 * (s / 2.0) ** r * k_q
    return 2.0 * (2.0 / s) ** r * (m / k_q) * base ** exponent


def _unit_rows(T: Operator, basis: OrthonormalBasis) -> np.ndarray:
    """Rows ``(T^* u_i)^T``, i.e. ``U^T T``."""
    if basis.dim != T.rows:
        raise InputError(f"basis dimension {basis.dim} does not match operator rows {T.rows}")
    return basis.vectors.T @ T.entries


def coord_count(model: RandomVectorModel, T, basis: OrthonormalBasis, theta: float, s: float,
                trials: int, seed: int = 0, threads=1, q: float = 4.0) -> CoordCountReport:
    """Empirical law of ``N = #{i : |<TX, u_i>| >= theta}``.

    ``bound_rhs`` is evaluated only when every ``||T^* u_i||`` is 1 and the
    model declares ``sba_L``; otherwise it is ``None``.
    """
    T = as_operator(T)
    if not theta > 0:
        raise ParameterError("theta must be positive")
    if not 0 < s < 1:
        raise ParameterError("s must lie in (0, 1)")
    if model.dim != T.cols:
        raise InputError(f"operator acts on R^{T.cols} but the model lives in R^{model.dim}")
    m = T.rows
    W = _unit_rows(T, basis).T

    def block(rng, size):
        y = np.abs(sample_batch(model, size, rng) @ W)
        n = np.count_nonzero(y >= theta, axis=1)
        return np.bincount(n, minlength=m + 1)

    counts = np.sum(_rng.map_blocks(block, trials, seed, "coord_count", threads), axis=0)
    level = int(math.floor((1.0 - s) * m))
    fails = int(counts[: level + 1].sum())
    rhs = None
    k_q = None
    if T.spectrum.values[0] > 0:
        k_q = stable_rank_q(T, q)
    row_norms = np.linalg.norm(W, axis=0)
    if model.sba_L is not None and np.all(np.abs(row_norms - 1.0) <= UNIT_NORM_TOL):
        rhs = csb_bound_eval(q, m, k_q, s, theta, model.sba_L)
    return CoordCountReport(float(theta), float(s), m, tuple(int(c) for c in counts),
                            probability_estimate(fails, trials, seed), rhs, k_q)


def binomial_count_pmf(m: int, theta: float) -> np.ndarray:
    """Law of ``N`` for a standard Gaussian vector in any orthonormal basis."""
    p = 2.0 * _sps.norm.sf(theta)
    return _sps.binom.pmf(np.arange(m + 1), m, p)


# -- restricted invertibility --------------------------------------------------

def smin(A: np.ndarray, cols: Sequence[int]) -> float:
    """Smallest singular value of the column submatrix (0 if rank deficient)."""
    cols = list(cols)
    if not cols:
        return math.inf
    sub = A[:, cols]
    if len(cols) > sub.shape[0]:
        return 0.0
    return float(np.linalg.svd(sub, compute_uv=False)[-1])


@dataclass(frozen=True)
class Selection:
    sigma: Tuple[int, ...]
    certificate: float
    incomplete: bool
    method: str

    def __iter__(self):
        return iter((self.sigma, self.certificate))


def _barrier_potential(eigs: np.ndarray, b: float, n: int) -> float:
    t = eigs.size
    return float(np.sum(1.0 / (eigs - b))) - (n - t) / b


def _nonzero_eigs(A: np.ndarray, cols: List[int]) -> np.ndarray:
    # nonzero eigenvalues of sum a_i a_i^T equal those of the Gram matrix
    sub = A[:, cols]
    return np.linalg.eigvalsh(sub.T @ sub)


def _barrier_greedy(A: np.ndarray, target: int) -> List[int]:
    """Lower-barrier greedy: each step adds the column admitting the largest barrier.

    The barrier ``b`` lower-bounds every nonzero eigenvalue of
    ``sum_{i in sigma} a_i a_i^T``; a column is admissible if the barrier can
    stay positive while the potential ``Tr(A - bI)^{-1}`` does not increase.
    """
    n, m = A.shape
    fro2 = float(np.sum(A * A))
    b = fro2 / m
    phi = -n / b
    chosen: List[int] = []
    for _ in range(target):
        best = None
        for i in range(m):
            if i in chosen:
                continue
            eigs = _nonzero_eigs(A, chosen + [i])
            lam = float(eigs[0])
            if lam <= RANK_FLOOR * fro2:
                continue
            lo, hi = 0.0, min(b, lam * (1.0 - 1e-12))
            if _barrier_potential(eigs, hi, n) <= phi:
                bp = hi
            else:
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    if _barrier_potential(eigs, mid, n) <= phi:
                        lo = mid
                    else:
                        hi = mid
                bp = lo
            if bp > 0 and (best is None or bp > best[0]):
                best = (bp, i, eigs)
        if best is None:
            break
        b, i, eigs = best
        chosen.append(i)
        phi = _barrier_potential(eigs, b, n)
    return chosen



def _pure_greedy(A: np.ndarray, target: int, start: Sequence[int] = ()) -> List[int]:
    m = A.shape[1]
    chosen = list(start)
    while len(chosen) < target:
        best_val, best_i = 0.0, None
        for i in range(m):
            if i in chosen:
                continue
            v = smin(A, chosen + [i])
            if v > best_val:
                best_val, best_i = v, i
        if best_i is None:
            break
        chosen.append(best_i)
    return chosen


def _swap_search(A: np.ndarray, chosen: List[int]) -> List[int]:
    """1-swap local search on ``s_min``; first strict improvement in index order."""
    m = A.shape[1]
    current = sorted(chosen)
    value = smin(A, current)
    improved = True
    while improved:
        improved = False
        for pos in range(len(current)):
            for j in range(m):
                if j in current:
                    continue
                cand = sorted(current[:pos] + current[pos + 1:] + [j])
                v = smin(A, cand)
                if v > value * (1.0 + 1e-12):
                    current, value, improved = cand, v, True
                    break
            if improved:
                break
    return current


def restricted_invertibility_select(A, target_size: int, q: float = math.inf) -> Selection:
    """Pick ``target_size`` columns of ``A`` whose submatrix is well invertible.

    Barrier greedy always runs.  For at most 24 columns a pure greedy also
    runs, once unseeded and once from each column, each seeded run refined by
    1-swap local search; the best certificate wins, earliest candidate on ties.  The
    certificate is recomputed by SVD.  ``q`` is accepted for interface
    symmetry and does not change the procedure.
    """
    A = as_operator(A)
    M = np.asarray(A.entries)
    m = M.shape[1]
    if A.spectrum.values[0] == 0:
        raise ParameterError("restricted invertibility of the zero operator")
    if not 1 <= int(target_size) <= m:
        raise ParameterError(f"target_size must lie in [1, {m}], got {target_size}")
    target = int(target_size)
    candidates = [("barrier", _barrier_greedy(M, target))]
    if m <= GREEDY_FALLBACK_MAX_M:
        candidates.append(("greedy", _pure_greedy(M, target)))
        for i in range(m):
            g = _pure_greedy(M, target, [i])
            if len(g) == target:
                candidates.append(("greedy_swap", _swap_search(M, g)))
    best = None
    for name, cols in candidates:
        cols = tuple(sorted(cols))
        cert = smin(M, cols) if cols else 0.0
        key = (len(cols), cert)
        if best is None or key > best[0]:
            best = (key, cols, cert, name)
    _, cols, cert, name = best
    return Selection(cols, cert, len(cols) < target or cert <= 0.0, name)


def restricted_invertibility_guarantee(A) -> Tuple[int, float]:
    """``(floor(srank(A)/2), (1 - 1/sqrt 2) ||A||_S2 / sqrt(m))``."""
    A = as_operator(A)
    return (int(math.floor(stable_rank(A) / 2.0)),
            (1.0 - 1.0 / math.sqrt(2.0)) * schatten_norm(A, 2) / math.sqrt(A.cols))


# -- block decomposition --------------------------------------------------------

@dataclass(frozen=True)
class BlockDecomposition:
    blocks: Tuple[Tuple[int, ...], ...]
    certificates: Tuple[float, ...]
    lam: float
    q: float
    m: int
    step_k_hat: Tuple[float, ...]
    step_floor: Tuple[int, ...]

    @property
    def coverage(self) -> int:
        return sum(len(b) for b in self.blocks)

    def global_ratios(self, k_q: float) -> List[float]:
        return [len(b) / k_q for b in self.blocks]


def block_decompose(T, basis: OrthonormalBasis, lam: float, q: float) -> BlockDecomposition:
    """Disjoint blocks ``sigma_j`` with ``gamma_j = 1/s_min(T^* P_{sigma_j}^*)``.

    Each step measures ``k_hat = srank_q`` of the residual columns, selects
    ``max(1, floor(lam^{q/(q-2)} k_hat / 2))`` columns, then keeps extending
    while ``gamma_j <= c_q``.  Stops once ``(1 - lam) m`` indices are covered.
    """
    T = as_operator(T)
    if not 0 < lam < 1:
        raise ParameterError(f"lambda must lie in (0, 1), got {lam}")
    if not q > 2:
        raise ParameterError(f"q must exceed 2, got {q}")
    cols = _unit_rows(T, basis).T
    m = cols.shape[1]
    norms = np.linalg.norm(cols, axis=0)
    worst = float(np.max(np.abs(norms - 1.0)))
    if worst > UNIT_NORM_TOL:
        raise PreconditionError(
            f"||T^* u_i|| = 1 fails by {worst:.3g}; use general_precondition_path", worst)
    c_q = csb_constant(q)
    r = q / (q - 2.0)
    residual = list(range(m))
    blocks, certs, khats, floors = [], [], [], []
    while m - len(residual) < (1.0 - lam) * m:
        sub = cols[:, residual]
        k_hat = stable_rank_q(sub, q)
        floor_size = int(math.floor(lam ** r * k_hat / 2.0))
        target = min(max(1, floor_size), len(residual))
        sel = restricted_invertibility_select(sub, target)
        chosen = [residual[i] for i in sel.sigma]
        rest = [i for i in residual if i not in chosen]
        for i in rest:
            if smin(cols, chosen + [i]) >= 1.0 / c_q:
                chosen.append(i)
        chosen.sort()
        cert = smin(cols, chosen)
        blocks.append(tuple(chosen))
        certs.append(1.0 / cert)
        khats.append(k_hat)
        floors.append(floor_size)
        residual = [i for i in residual if i not in chosen]
    return BlockDecomposition(tuple(blocks), tuple(certs), float(lam), float(q), m,
                              tuple(khats), tuple(floors))


def general_precondition_path(T, basis: OrthonormalBasis, delta1: float,
                              delta2: float) -> Tuple[Tuple[int, ...], float]:
    """Check the moment condition on ``r_i = ||T^* u_i||`` and return ``(sigma0, c0_hat)``.

    Condition: ``((1/m) sum r_i^{2+delta1})^{1/(2+delta1)} <= delta2 ||T||_S2 / sqrt(m)``.
    """
    T = as_operator(T)
    if not delta1 > 0:
        raise ParameterError("delta1 must be positive")
    if not delta2 >= 1:
        raise ParameterError("delta2 must be >= 1")
    r = np.linalg.norm(_unit_rows(T, basis), axis=1)
    m = r.size
    hs = schatten_norm(T, 2)
    p = 2.0 + delta1
    top = float(r.max())
    measured = top * float(np.mean((r / top) ** p)) ** (1.0 / p) if top > 0 else 0.0
    if measured > delta2 * hs / math.sqrt(m) * (1.0 + 1e-12):
        raise PreconditionError(
            f"moment condition fails: (2+delta1)-average {measured:.6g} > "
            f"{delta2 * hs / math.sqrt(m):.6g}", measured)
    threshold = hs / (2.0 * math.sqrt(m))
    sigma0 = tuple(int(i) for i in np.flatnonzero(r >= threshold))
    return sigma0, len(sigma0) / m


def topk_norm(x, k: int) -> float:
    """Euclidean norm of the ``k`` largest-magnitude coordinates."""
    x = np.abs(np.asarray(x, dtype=float).ravel())
    if not 1 <= int(k) <= x.size:
        raise ParameterError(f"k must lie in [1, {x.size}], got {k}")
    top = np.sort(x)[::-1][: int(k)]
    # fsum is correctly rounded, so the result is exactly monotone in k
    return math.sqrt(math.fsum(top * top))
