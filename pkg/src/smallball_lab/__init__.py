"""Monte-Carlo laboratory for small-ball probabilities of linear images of random vectors."""
from .convolution import (ConvolutionEnsemble, FourierProfile, circulant_matvec, circular_convolve,
                          direct_convolve, fourier_profile, separation_experiment,
                          separation_sweep, sparse_unit_vector, subsample)
from .coordinate import (BlockDecomposition, CoordCountReport, OrthonormalBasis, block_decompose,
                         coord_count, csb_bound_eval, general_precondition_path,
                         restricted_invertibility_select, topk_norm)
from .errors import (ConfigError, DomainError, InputError, LabError, ParameterError,
                     PreconditionError)
from .grassmann import SubspaceSample, a_k_estimate, gaussian_negative_moment, sample_subspace
from .harness import ExperimentConfig, RunResult, load_config, parse_config, run
from .lp import DyadicDecomposition, dyadic_decompose, lp_smallball_experiment
from .models import RandomVectorModel, sba_check, sba_sweep
from .operator import (Operator, SingularSpectrum, schatten_norm, singular_values, stable_rank,
                       stable_rank_q, truncate_spectrum, truncation_level)
from .smallball import (comparison_check, corollary_bound_sweep, logconcave_twosided_check,
                        negative_moment, smallball_prob, smallball_sweep)
from .stats import MomentEstimate, ProbabilityEstimate, chi_oracle, clopper_pearson

__version__ = "0.1.0"

__all__ = [
    "BlockDecomposition",
    "ConfigError",
    "ConvolutionEnsemble",
    "CoordCountReport",
    "DomainError",
    "DyadicDecomposition",
    "ExperimentConfig",
    "FourierProfile",
    "InputError",
    "LabError",
    "MomentEstimate",
    "Operator",
    "OrthonormalBasis",
    "ParameterError",
    "PreconditionError",
    "ProbabilityEstimate",
    "RandomVectorModel",
    "RunResult",
    "SingularSpectrum",
    "SubspaceSample",
    "a_k_estimate",
    "block_decompose",
    "chi_oracle",
    "circulant_matvec",
    "circular_convolve",
    "clopper_pearson",
    "comparison_check",
    "coord_count",
    "corollary_bound_sweep",
    "csb_bound_eval",
    "dyadic_decompose",
    "fourier_profile",
    "gaussian_negative_moment",
    "general_precondition_path",
    "load_config",
    "logconcave_twosided_check",
    "lp_smallball_experiment",
    "negative_moment",
    "parse_config",
    "restricted_invertibility_select",
    "run",
    "sample_subspace",
    "sba_check",
    "sba_sweep",
    "schatten_norm",
    "separation_experiment",
    "separation_sweep",
    "singular_values",
    "smallball_prob",
    "smallball_sweep",
    "stable_rank",
    "stable_rank_q",
    "subsample",
    "topk_norm",
    "truncate_spectrum",
    "truncation_level",
]
