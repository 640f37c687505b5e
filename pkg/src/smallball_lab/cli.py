"""``smallball-lab`` command line.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import rng as _rng
from .coordinate import OrthonormalBasis, block_decompose
from .errors import ConfigError, LabError, ParameterError
from .grassmann import a_k_estimate
from .harness import EXPERIMENTS, RunFailure, execute, load_config
from .operator import Operator

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _threads(value: str):
    if value == "auto":
        return value
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("threads must be a positive integer or 'auto'") from None
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def _seed(value: str) -> int:
    n = int(value)
    if not 0 <= n < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return n


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smallball-lab",
                     description="Monte-Carlo small-ball experiments from JSON configs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("run",) + EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run a '{name}' experiment" if name != "run"
                            else "run the experiment named in the config")
        sp.add_argument("--config", type=Path, required=name not in ("ak", "decompose"))
        sp.add_argument("--seed", type=_seed)
        sp.add_argument("--threads", type=_threads)
        sp.add_argument("--out", type=Path)
        if name == "ak":
            sp.add_argument("--matrix", type=Path)
            sp.add_argument("--k", type=int)
            sp.add_argument("--trials", type=int, default=100_000)
        if name == "decompose":
            sp.add_argument("--matrix", type=Path)
            sp.add_argument("--lambda", dest="lam", type=float)
            sp.add_argument("--q", type=float)
    return parser


def _matrix_mode(args) -> int:
    """``ak``/``decompose`` driven directly by a matrix file; prints one JSON object."""
    if args.matrix is None:
        raise ConfigError("either --config or --matrix is required", field="--matrix")
    if not args.matrix.is_file():
        raise ConfigError(f"matrix file not found: {args.matrix}", field="--matrix")
    try:
        T = Operator.from_csv(args.matrix)
    except LabError as exc:
        raise ConfigError(str(exc), field="--matrix") from None
    seed = 0 if args.seed is None else args.seed
    try:
        if args.command == "ak":
            if args.k is None:
                raise ConfigError("missing --k", field="--k")
            est = a_k_estimate(T, args.k, args.trials, seed, args.threads)
            out = {"value": est.value, "ci_low": est.ci_low, "ci_high": est.ci_high,
                   "trials": est.trials, "seed": seed}
        else:
            if args.lam is None or args.q is None:
                raise ConfigError("decompose needs --lambda and --q", field="--lambda")
            dec = block_decompose(T, OrthonormalBasis.standard(T.rows), args.lam, args.q)
            out = {"blocks": [list(b) for b in dec.blocks], "certificates": list(dec.certificates)}
    except ConfigError:
        raise
    except (LabError, ValueError, ArithmeticError) as exc:
        raise RunFailure(args.command, exc) from exc
    print(json.dumps(out))
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            return _matrix_mode(args)
        cfg = load_config(args.config, None if args.command == "run" else args.command)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        threads = args.threads if args.threads is not None else cfg.threads
        try:
            _rng.resolve_threads(threads)
        except ParameterError as exc:
            raise ConfigError(str(exc), field="threads") from None
        result = execute(cfg, threads)
        out = args.out if args.out is not None else (
            cfg.base_dir / cfg.output if cfg.output is not None else None)
        if out is not None:
            with open(out, "w", newline="\n") as fh:
                fh.write(result.to_csv())
        sys.stdout.write(result.json_lines())
        return 0
    except ConfigError as exc:
        print(f"smallball-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as exc:
        print(f"smallball-lab: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (LabError, ValueError) as exc:
        print(f"smallball-lab: experiment '{args.command}' failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
