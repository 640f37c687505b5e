"""Declarative experiment runner with strict JSON configs and fixed CSV schemas."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import rng as _rng
from .convolution import ConvolutionEnsemble, separation_sweep
from .coordinate import OrthonormalBasis, block_decompose, coord_count
from .errors import ConfigError, LabError
from .grassmann import SubspaceSample, a_k_estimate, sample_subspace
from .lp import lp_smallball_experiment
from .models import RandomVectorModel, sba_sweep
from .operator import Operator
from .smallball import comparison_check, smallball_sweep
from .stats import fit_log_slope

EXPERIMENTS = ("ak", "smallball", "negmoment", "coordsb", "decompose", "conv", "lp", "sbacheck")
TOP_KEYS = ("experiment", "model", "operator", "params", "trials", "seed", "threads", "output",
            "sweep")

SCHEMAS: Dict[str, Sequence[str]] = {
    "ak": ("k", "value", "ci_low", "ci_high", "singular_samples", "trials", "seed"),
    "smallball": ("epsilon", "p_hat", "ci_low", "ci_high", "trials", "threshold_scale", "seed"),
    "negmoment": ("k", "cap", "value", "ci_low", "ci_high", "value_low_cap", "value_high_cap",
                  "cap_sensitivity", "L", "gaussian_rhs", "holds", "trials", "seed"),
    "coordsb": ("theta", "s", "m", "k_q", "p_fail", "ci_low", "ci_high", "bound_rhs", "trials",
                "seed"),
    "decompose": ("block", "size", "certificate", "k_hat", "floor", "indices", "trials", "seed"),
    "conv": ("n", "s", "delta", "epsilon", "q", "p_E1", "p_E1_ci_low", "p_E1_ci_high", "p_E2",
             "p_E2_ci_low", "p_E2_ci_high", "exponent_new", "exponent_old", "trials", "seed"),
    "lp": ("p", "epsilon", "p_hat", "ci_low", "ci_high", "k_hat", "slope", "trials", "seed"),
    "sbacheck": ("epsilon", "k", "p_hat", "ci_low", "ci_high", "ceiling", "ratio", "trials",
                 "seed"),
}

# Allowed params per experiment, with defaults (``...`` marks required).
PARAMS: Dict[str, Dict[str, Any]] = {
    "ak": {"k": ...},
    "smallball": {"epsilons": ..., "threshold_scale": "hs_norm", "k": None, "ak_trials": 100_000},
    "negmoment": {"k": ..., "cap": 1e6, "L": None},
    "coordsb": {"theta": ..., "s": ..., "q": 4.0, "basis": "standard", "basis_seed": 0},
    "decompose": {"lambda": ..., "q": ..., "basis": "standard", "basis_seed": 0},
    "conv": {"n": ..., "s": ..., "delta": ..., "epsilons": ..., "q": 4.0, "kappa1": 0.5,
             "kappa2": 0.5, "a_seed": None},
    "lp": {"a": ..., "p": ..., "epsilons": ..., "c1": 1.0},
    "sbacheck": {"k": ..., "epsilons": ..., "subspace": "haar", "indices": None, "z": None,
                 "subspace_seed": 0},
}

NEEDS_MODEL = {"smallball", "negmoment", "coordsb", "conv", "lp", "sbacheck"}
NEEDS_OPERATOR = {"ak", "smallball", "negmoment", "coordsb", "decompose"}
DETERMINISTIC = {"decompose"}
# Sweeping these reuses the base seed: they only move a threshold over one sample set.
SHARED_SAMPLE_PARAMS = {
    "smallball": {"epsilons"},
    "negmoment": {"cap"},
    "coordsb": {"s"},
    "conv": {"epsilons"},
    "lp": {"epsilons"},
    "sbacheck": {"epsilons"},
}
SCALAR_ALIASES = {"epsilon": "epsilons"}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: Optional[Dict[str, Any]] = None
    operator: Optional[Dict[str, Any]] = None
    params: Dict[str, Any] = field(default_factory=dict)
    trials: int = 0
    seed: int = 0
    threads: Any = None
    output: Optional[str] = None
    sweep: Optional[Dict[str, List[Any]]] = None
    base_dir: Path = Path(".")


@dataclass
class RunResult:
    experiment: str
    columns: Sequence[str]
    rows: List[Dict[str, Any]]
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_csv(self) -> str:
        return rows_to_csv(self.columns, self.rows)

    def json_lines(self) -> str:
        return "".join(json.dumps({c: _json_value(r.get(c)) for c in self.columns}) + "\n"
                       for r in self.rows)


# -- parsing ------------------------------------------------------------------

def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return lineno
    return None


def _reject_constant(name):
    raise ValueError(f"non-standard JSON constant {name}")


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key '{k}'")
        out[k] = v
    return out


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def parse_config(text: str, base_dir: Path = Path("."), experiment: Optional[str] = None) -> ExperimentConfig:
    """Strict parse: unknown keys, duplicate keys and NaN/Infinity literals are rejected."""
    try:
        raw = json.loads(text, parse_constant=_reject_constant, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", line=1)

    def err(msg, key):
        top = key.split(".")[0]
        leaf = key.split(".")[-1]
        return ConfigError(msg, field=key, line=_line_of(text, leaf) or _line_of(text, top))

    extra = sorted(set(raw) - set(TOP_KEYS))
    if extra:
        raise err(f"unknown key (allowed: {', '.join(TOP_KEYS)})", extra[0])
    exp = raw.get("experiment", experiment)
    if exp is None:
        raise ConfigError("missing required key", field="experiment")
    if exp not in EXPERIMENTS:
        raise err(f"unknown experiment '{exp}' (one of {', '.join(EXPERIMENTS)})", "experiment")
    if experiment is not None and exp != experiment:
        raise err(f"config is for '{exp}' but subcommand is '{experiment}'", "experiment")

    trials = raw.get("trials", 0 if exp in DETERMINISTIC else None)
    if trials is None:
        raise ConfigError("missing required key", field="trials")
    if not _is_int(trials) or (trials < 1 and exp not in DETERMINISTIC):
        raise err("trials must be an integer >= 1", "trials")
    seed = raw.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        raise err("seed must be an integer in [0, 2^64)", "seed")
    threads = raw.get("threads")
    if threads is not None and not (threads == "auto" or (_is_int(threads) and threads >= 1)):
        raise err("threads must be a positive integer or \"auto\"", "threads")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise err("output must be a path string", "output")

    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise err("params must be an object", "params")
    allowed = PARAMS[exp]
    for key in params:
        if key not in allowed:
            raise err(f"unknown parameter for '{exp}' (allowed: {', '.join(allowed)})",
                      f"params.{key}")
    merged = {k: v for k, v in allowed.items() if v is not ...}
    merged.update(params)

    sweep = raw.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or len(sweep) != 1:
            raise err("sweep must name exactly one parameter", "sweep")
        (name, values), = sweep.items()
        target = SCALAR_ALIASES.get(name, name)
        if target not in allowed:
            raise err(f"cannot sweep unknown parameter '{name}'", f"sweep.{name}")
        if not isinstance(values, list) or not values:
            raise err("sweep grid must be a non-empty list", f"sweep.{name}")
        if any(isinstance(v, (list, dict)) for v in values):
            raise err("sweep grid values must be scalars", f"sweep.{name}")
        merged.setdefault(target, None)

    missing = [k for k, v in allowed.items() if v is ... and k not in merged]
    if missing:
        raise ConfigError("missing required parameter", field=f"params.{missing[0]}")

    model = raw.get("model")
    if exp in NEEDS_MODEL and model is None:
        raise ConfigError("missing required key", field="model")
    if model is not None:
        try:
            RandomVectorModel.from_config(model)
        except ConfigError as exc:
            raise ConfigError(str(exc), line=_line_of(text, "model")) from None
    operator = raw.get("operator")
    if exp in NEEDS_OPERATOR and operator is None:
        raise ConfigError("missing required key", field="operator")
    if operator is not None:
        _check_operator_spec(operator, base_dir, text)
    return ExperimentConfig(exp, model, operator, merged, trials, seed, threads, output, sweep,
                            base_dir)


OPERATOR_KEYS = {
    "identity": {"generator", "dim"},
    "diagonal": {"generator", "values"},
    "gaussian": {"generator", "rows", "cols", "seed"},
}


def _check_operator_spec(spec, base_dir: Path, text: str) -> None:
    line = _line_of(text, "operator")
    if not isinstance(spec, dict):
        raise ConfigError("operator must be an object", field="operator", line=line)
    if "file" in spec:
        if set(spec) != {"file"}:
            raise ConfigError("file operator takes only 'file'", field="operator", line=line)
        path = base_dir / spec["file"]
        if not path.is_file():
            raise ConfigError(f"matrix file not found: {path}", field="operator.file", line=line)
        return
    gen = spec.get("generator")
    if gen not in OPERATOR_KEYS:
        raise ConfigError("operator needs 'file' or 'generator' in "
                          f"{sorted(OPERATOR_KEYS)}", field="operator.generator", line=line)
    if set(spec) != OPERATOR_KEYS[gen]:
        raise ConfigError(f"generator '{gen}' takes keys {sorted(OPERATOR_KEYS[gen])}",
                          field="operator", line=line)


def load_config(path, experiment: Optional[str] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, path.parent, experiment)


def build_operator(spec: Dict[str, Any], base_dir: Path = Path(".")) -> Operator:
    if "file" in spec:
        return Operator.from_csv(base_dir / spec["file"])
    gen = spec["generator"]
    if gen == "identity":
        return Operator.identity(spec["dim"])
    if gen == "diagonal":
        return Operator.diagonal(spec["values"])
    return Operator.gaussian(spec["rows"], spec["cols"], spec["seed"])


# -- output ---------------------------------------------------------------------

def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if not math.isfinite(v) else format(v, ".10g")
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, str)) or v is None:
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return v if math.isfinite(v) else None


def rows_to_csv(columns: Sequence[str], rows: List[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([format_value(r.get(c)) for c in columns])
    return buf.getvalue()


# -- experiments ------------------------------------------------------------------

def _basis(p, m: int) -> OrthonormalBasis:
    if p["basis"] == "standard":
        return OrthonormalBasis.standard(m)
    if p["basis"] == "haar":
        return OrthonormalBasis.haar(m, p["basis_seed"])
    raise ConfigError("basis must be 'standard' or 'haar'", field="params.basis")


def _eps_list(v) -> List[float]:
    return [float(x) for x in (v if isinstance(v, list) else [v])]


def _run_once(cfg: ExperimentConfig, seed: int, threads) -> RunResult:
    p = cfg.params
    exp = cfg.experiment
    model = RandomVectorModel.from_config(cfg.model) if cfg.model is not None else None
    T = build_operator(cfg.operator, cfg.base_dir) if cfg.operator is not None else None
    trials = cfg.trials
    base = {"trials": trials, "seed": seed}
    rows: List[Dict[str, Any]] = []
    extras: Dict[str, Any] = {}
    if exp == "ak":
        est = a_k_estimate(T, int(p["k"]), trials, seed, threads)
        rows.append(dict(base, k=int(p["k"]), value=est.value, ci_low=est.ci_low,
                         ci_high=est.ci_high,
                         singular_samples=int(est.diagnostics.get("singular_samples", 0))))
    elif exp == "smallball":
        rep = smallball_sweep(model, T, _eps_list(p["epsilons"]), trials, seed, threads,
                              p["threshold_scale"], p["k"], p["ak_trials"])
        for e, est in zip(rep.epsilons, rep.p_hats):
            rows.append(dict(base, epsilon=e, p_hat=est.p_hat, ci_low=est.ci_low,
                             ci_high=est.ci_high, threshold_scale=rep.threshold_scale))
        extras["fitted_slope"] = rep.fitted_slope
        extras["scale_value"] = rep.scale_value
    elif exp == "negmoment":
        rep = comparison_check(model, T, int(p["k"]), trials, float(p["cap"]), seed, threads,
                               p["L"])
        est = rep.lhs.estimate
        rows.append(dict(base, k=rep.k, cap=rep.lhs.cap, value=est.value, ci_low=est.ci_low,
                         ci_high=est.ci_high, value_low_cap=rep.lhs.at_low_cap.value,
                         value_high_cap=rep.lhs.at_high_cap.value,
                         cap_sensitivity=rep.lhs.cap_sensitivity, L=rep.L,
                         gaussian_rhs=rep.rhs, holds=rep.holds()))
    elif exp == "coordsb":
        basis = _basis(p, T.rows)
        rep = coord_count(model, T, basis, float(p["theta"]), float(p["s"]), trials, seed,
                          threads, float(p["q"]))
        rows.append(dict(base, theta=rep.theta, s=rep.s, m=rep.m, k_q=rep.k_q,
                         p_fail=rep.p_fail.p_hat, ci_low=rep.p_fail.ci_low,
                         ci_high=rep.p_fail.ci_high, bound_rhs=rep.bound_rhs))
        extras["counts"] = list(rep.counts)
    elif exp == "decompose":
        dec = block_decompose(T, _basis(p, T.rows), float(p["lambda"]), float(p["q"]))
        for j, (blk, cert) in enumerate(zip(dec.blocks, dec.certificates)):
            rows.append(dict(base, block=j, size=len(blk), certificate=cert,
                             k_hat=dec.step_k_hat[j], floor=dec.step_floor[j],
                             indices=" ".join(str(i) for i in blk)))
        extras["coverage"] = dec.coverage
    elif exp == "conv":
        n, s, delta = int(p["n"]), int(p["s"]), float(p["delta"])
        a_seed = _rng.derive_seed(seed, 0) if p["a_seed"] is None else int(p["a_seed"])
        ens = ConvolutionEnsemble.sparse(n, s, delta, model, a_seed)
        reps = separation_sweep(ens, _eps_list(p["epsilons"]), trials, seed, threads,
                                float(p["q"]), float(p["kappa1"]), float(p["kappa2"]))
        for r in reps:
            rows.append(dict(base, n=n, s=s, delta=delta, epsilon=r.epsilon, q=r.q,
                             p_E1=r.p_E1.p_hat, p_E1_ci_low=r.p_E1.ci_low,
                             p_E1_ci_high=r.p_E1.ci_high, p_E2=r.p_E2.p_hat,
                             p_E2_ci_low=r.p_E2.ci_low, p_E2_ci_high=r.p_E2.ci_high,
                             exponent_new=r.exponent_new, exponent_old=r.exponent_old))
    elif exp == "lp":
        rep = lp_smallball_experiment(model, p["a"], float(p["p"]), _eps_list(p["epsilons"]),
                                      trials, seed, threads, float(p["c1"]))
        for e, est in zip(rep.epsilons, rep.p_hats):
            rows.append(dict(base, p=rep.p, epsilon=e, p_hat=est.p_hat, ci_low=est.ci_low,
                             ci_high=est.ci_high, k_hat=rep.k_hat, slope=rep.slope))
        extras["fitted_slope"] = rep.slope
    elif exp == "sbacheck":
        k = int(p["k"])
        if p["subspace"] == "haar":
            F = sample_subspace(model.dim, k, _rng.block_generator(p["subspace_seed"], "subspace", 0))
        elif p["subspace"] == "coordinate":
            idx = p["indices"] if p["indices"] is not None else list(range(k))
            if len(idx) != k:
                raise ConfigError("indices must list k coordinates", field="params.indices")
            F = SubspaceSample.coordinate(model.dim, idx)
        else:
            raise ConfigError("subspace must be 'haar' or 'coordinate'", field="params.subspace")
        for r in sba_sweep(model, F, p["z"], _eps_list(p["epsilons"]), trials, seed, threads):
            rows.append(dict(base, epsilon=r.epsilon, k=r.k, p_hat=r.estimate.p_hat,
                             ci_low=r.estimate.ci_low, ci_high=r.estimate.ci_high,
                             ceiling=r.ceiling, ratio=r.ratio))
    return RunResult(exp, SCHEMAS[exp], rows, extras)


def run(cfg: ExperimentConfig, threads=None) -> RunResult:
    """Run one experiment, or one row group per grid point when ``sweep`` is set."""
    threads = cfg.threads if threads is None else threads
    if cfg.sweep is None:
        return _run_once(cfg, cfg.seed, threads)
    (name, values), = cfg.sweep.items()
    target = SCALAR_ALIASES.get(name, name)
    shared = target in SHARED_SAMPLE_PARAMS.get(cfg.experiment, set())
    out = RunResult(cfg.experiment, SCHEMAS[cfg.experiment], [], {"sweep_param": name})
    for i, v in enumerate(values):
        params = dict(cfg.params)
        params[target] = v
        seed = cfg.seed if shared else _rng.derive_seed(cfg.seed, i)
        res = _run_once(replace(cfg, params=params, sweep=None), seed, threads)
        out.rows.extend(res.rows)
    if cfg.experiment in ("smallball", "lp") and target == "epsilons":
        out.extras["fitted_slope"] = fit_log_slope([r["epsilon"] for r in out.rows],
                                                   [r["p_hat"] for r in out.rows], cfg.trials)
    return out


class RunFailure(LabError):
    """Runtime failure inside an experiment, tagged with the experiment id."""

    def __init__(self, experiment: str, cause: BaseException):
        super().__init__(f"experiment '{experiment}' failed: {cause}")
        self.experiment = experiment
        self.cause = cause


def execute(cfg: ExperimentConfig, threads=None) -> RunResult:
    """:func:`run` with non-config failures wrapped in :class:`RunFailure`."""
    try:
        return run(cfg, threads)
    except ConfigError:
        raise
    except (LabError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise RunFailure(cfg.experiment, exc) from exc
