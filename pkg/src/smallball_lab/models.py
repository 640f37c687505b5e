"""Random-vector models with declared small-ball constants.

Each model carries two declared constants:

``density_L``
    Bound on marginal densities: every ``k``-dimensional projection of ``X``
    has density at most ``density_L**k``.
``sba_L``
    Constant in the inequality form ``P(||P_F X - z|| <= eps sqrt(k)) <=
    (sba_L eps)^k`` for ``1 <= k <= n-1``.  It follows from ``density_L`` by
    integrating the density bound over a Euclidean ball of radius
    ``eps sqrt(k)``:  ``sba_L = density_L * max_k sqrt(k) * vol(B_2^k)^(1/k)``.

Shipped values:

* gaussian: ``density_L = 1/sqrt(2 pi)`` (exact peak of every marginal);
* cube ``[-1/2, 1/2]^n``: ``density_L = sqrt(2)``, Ball's bound on sections
  of the unit cube;
* iid_density with per-coordinate density bound ``b``: ``sqrt(2) b``, the
  cube comparison for independent coordinates with bounded densities;
* laplace_iid (unit variance): ``b = 1/sqrt(2)`` so ``density_L = 1``;
* ball_uniform (isotropic radius ``sqrt(n+2)``): computed exactly from
  section volumes, the ball being rotation invariant;
* perturbation ``W + delta X``: ``density_L(X) / delta`` when ``X`` declares
  one, otherwise unknown.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import special

from . import rng as _rng
from .errors import ConfigError, InputError, ParameterError
from .grassmann import SubspaceSample
from .stats import ProbabilityEstimate, probability_estimate

FAMILIES = ("gaussian", "cube", "iid_density", "laplace_iid", "ball_uniform", "perturbation")
LOG_CONCAVE = ("gaussian", "ball_uniform", "laplace_iid")


def ball_volume(k: int) -> float:
    return math.exp(0.5 * k * math.log(math.pi) - special.gammaln(0.5 * k + 1))


def sba_factor(dim: int) -> float:
    """``max_{1<=k<=max(1,dim-1)} sqrt(k) vol(B_2^k)^(1/k)``."""
    top = max(1, dim - 1)
    return max(math.sqrt(k) * ball_volume(k) ** (1.0 / k) for k in range(1, top + 1))


def _ball_density_constant(n: int) -> float:
    radius = math.sqrt(n + 2.0)
    best = 0.0
    for k in range(1, n + 1):
        peak = ball_volume(n - k) / (ball_volume(n) * radius ** k)
        best = max(best, peak ** (1.0 / k))
    return best


@dataclass(frozen=True)
class RandomVectorModel:
    family: str
    dim: int
    params: Dict[str, Any] = field(default_factory=dict)
    density_L: Optional[float] = None
    sba_L: Optional[float] = None
    wsba_theta: Optional[float] = None
    inner: Optional["RandomVectorModel"] = None
    base: Optional["RandomVectorModel"] = None
    delta: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family '{self.family}'", field="family")
        if int(self.dim) < 1:
            raise ConfigError(f"model dimension must be >= 1, got {self.dim}", field="dim")
        if self.family == "perturbation":
            if self.inner is None or self.base is None:
                raise ConfigError("perturbation needs 'base' and 'inner' models", field="params")
            if self.inner.dim != self.dim or self.base.dim != self.dim:
                raise ConfigError("perturbation components must share the model dimension")
            if not self.delta > 0:
                raise ConfigError("perturbation scale delta must be positive", field="delta")
        if self.density_L is not None and self.sba_L is None:
            object.__setattr__(self, "sba_L", self.density_L * sba_factor(self.dim))

    @property
    def declared(self) -> bool:
        return self.sba_L is not None

    @property
    def is_log_concave(self) -> bool:
        return self.family in LOG_CONCAVE

    # -- constructors -----------------------------------------------------
    @classmethod
    def gaussian(cls, dim: int) -> "RandomVectorModel":
        return cls("gaussian", dim, density_L=1.0 / math.sqrt(2.0 * math.pi))

    @classmethod
    def cube(cls, dim: int) -> "RandomVectorModel":
        return cls("cube", dim, density_L=math.sqrt(2.0))

    @classmethod
    def laplace(cls, dim: int) -> "RandomVectorModel":
        return cls("laplace_iid", dim, density_L=1.0)

    @classmethod
    def ball(cls, dim: int) -> "RandomVectorModel":
        return cls("ball_uniform", dim, density_L=_ball_density_constant(int(dim)))

    @classmethod
    def iid_density(cls, dim: int, inverse_cdf: Sequence[Sequence[float]]) -> "RandomVectorModel":
        """Coordinates drawn through a piecewise-linear inverse CDF.

        ``inverse_cdf`` is a table of ``(u, x)`` knots with ``u`` running from 0
        to 1.  Between knots the density is ``du/dx``; a flat segment in ``x``
        is an atom, which leaves the density unbounded (constants undeclared).
        """
        table = np.asarray(inverse_cdf, dtype=float)
        if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
            raise ConfigError("inverse_cdf must be a list of [u, x] pairs", field="params.inverse_cdf")
        u, x = table[:, 0], table[:, 1]
        if u[0] != 0.0 or u[-1] != 1.0 or np.any(np.diff(u) <= 0) or np.any(np.diff(x) < 0):
            raise ConfigError("inverse_cdf needs u from 0 to 1 strictly increasing and x non-decreasing",
                              field="params.inverse_cdf")
        dx = np.diff(x)
        dens = None if np.any(dx == 0) else math.sqrt(2.0) * float(np.max(np.diff(u) / dx))
        return cls("iid_density", dim, {"inverse_cdf": table.tolist()}, density_L=dens)

    @classmethod
    def perturbation(cls, base: "RandomVectorModel", inner: "RandomVectorModel",
                     delta: float) -> "RandomVectorModel":
        """``W + delta X`` with ``W = base`` and ``X = inner`` independent."""
        dens = None if inner.density_L is None else inner.density_L / float(delta)
        return cls("perturbation", inner.dim, density_L=dens, inner=inner, base=base,
                   delta=float(delta))

    @classmethod
    def from_config(cls, spec: Dict[str, Any], where: str = "model") -> "RandomVectorModel":
        """Build a model from ``{"family", "dim", "params", ["wsba_theta"]}``; unknown keys fail."""
        if not isinstance(spec, dict):
            raise ConfigError("model must be a JSON object", field=where)
        allowed = {"family", "dim", "params", "wsba_theta"}
        extra = set(spec) - allowed
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)}", field=where)
        for key in ("family", "dim"):
            if key not in spec:
                raise ConfigError("missing required key", field=f"{where}.{key}")
        family, dim = spec["family"], spec["dim"]
        if not isinstance(dim, int) or isinstance(dim, bool):
            raise ConfigError("dim must be an integer", field=f"{where}.dim")
        params = spec.get("params", {}) or {}
        if not isinstance(params, dict):
            raise ConfigError("params must be an object", field=f"{where}.params")
        expected = {
            "gaussian": set(), "cube": set(), "laplace_iid": set(), "ball_uniform": set(),
            "iid_density": {"inverse_cdf"}, "perturbation": {"base", "inner", "delta"},
        }
        if family not in expected:
            raise ConfigError(f"unknown model family '{family}'", field=f"{where}.family")
        extra = set(params) - expected[family]
        if extra:
            raise ConfigError(f"unknown params {sorted(extra)}", field=f"{where}.params")
        missing = expected[family] - set(params)
        if missing:
            raise ConfigError(f"missing params {sorted(missing)}", field=f"{where}.params")
        if family == "gaussian":
            model = cls.gaussian(dim)
        elif family == "cube":
            model = cls.cube(dim)
        elif family == "laplace_iid":
            model = cls.laplace(dim)
        elif family == "ball_uniform":
            model = cls.ball(dim)
        elif family == "iid_density":
            model = cls.iid_density(dim, params["inverse_cdf"])
        else:
            base = cls.from_config(params["base"], f"{where}.params.base")
            inner = cls.from_config(params["inner"], f"{where}.params.inner")
            if base.dim != dim or inner.dim != dim:
                raise ConfigError("perturbation components must have the model dim", field=where)
            model = cls.perturbation(base, inner, float(params["delta"]))
        if "wsba_theta" in spec:
            model = replace(model, wsba_theta=float(spec["wsba_theta"]))
        return model


def sample_batch(model: RandomVectorModel, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` independent draws, shape ``(size, dim)``."""
    n = model.dim
    fam = model.family
    if fam == "gaussian":
        return rng.standard_normal((size, n))
    if fam == "cube":
        return rng.random((size, n)) - 0.5
    if fam == "laplace_iid":
        return rng.laplace(0.0, 1.0 / math.sqrt(2.0), (size, n))
    if fam == "ball_uniform":
        g = rng.standard_normal((size, n))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = math.sqrt(n + 2.0) * rng.random(size) ** (1.0 / n)
        return g * r[:, None]
    if fam == "iid_density":
        table = np.asarray(model.params["inverse_cdf"], dtype=float)
        return np.interp(rng.random((size, n)), table[:, 0], table[:, 1])
    if fam == "perturbation":
        w = sample_batch(model.base, size, rng)
        x = sample_batch(model.inner, size, rng)
        return w + model.delta * x
    raise ConfigError(f"unknown model family '{fam}'")


def sample(model: RandomVectorModel, rng: np.random.Generator) -> np.ndarray:
    return sample_batch(model, 1, rng)[0]


@dataclass(frozen=True)
class SBAReport:
    """Empirical ``P(||P_F X - z|| <= eps sqrt(k))`` next to ``(sba_L eps)^k``."""

    epsilon: float
    k: int
    estimate: ProbabilityEstimate
    ceiling: Optional[float]

    @property
    def ratio(self) -> Optional[float]:
        if self.ceiling is None or self.ceiling == 0:
            return None
        return self.estimate.p_hat / self.ceiling


def _sba_distances(model, F: SubspaceSample, z, trials, seed, threads) -> np.ndarray:
    if F.ambient_dim != model.dim:
        raise InputError(f"subspace lives in R^{F.ambient_dim}, model in R^{model.dim}")
    z = np.zeros(model.dim) if z is None else np.asarray(z, dtype=float)
    if z.shape != (model.dim,):
        raise InputError(f"shift z must have length {model.dim}, got shape {z.shape}")
    Q = F.frame

    def block(rng, size):
        x = sample_batch(model, size, rng)
        return np.linalg.norm((x @ Q) @ Q.T - z, axis=1)

    return _rng.sample_blocks(block, trials, seed, "sba_check", threads)


def sba_sweep(model: RandomVectorModel, F: SubspaceSample, z, epsilons: Iterable[float],
              trials: int, seed: int = 0, threads=1) -> List[SBAReport]:
    """:func:`sba_check` at several ``epsilon`` on one shared sample set."""
    epsilons = [float(e) for e in epsilons]
    if any(not e > 0 for e in epsilons):
        raise ParameterError("epsilon must be positive")
    d = _sba_distances(model, F, z, trials, seed, threads)
    k = F.k
    out = []
    for eps in epsilons:
        hits = int(np.count_nonzero(d <= eps * math.sqrt(k)))
        ceiling = None if model.sba_L is None else (model.sba_L * eps) ** k
        out.append(SBAReport(eps, k, probability_estimate(hits, trials, seed), ceiling))
    return out


def sba_check(model: RandomVectorModel, F: SubspaceSample, z, epsilon: float, trials: int,
              seed: int = 0, threads=1) -> SBAReport:
    return sba_sweep(model, F, z, [epsilon], trials, seed, threads)[0]
