"""Multivariate Poisson-scaled beta (MPSB) models for dependent count series.

A latent common environment theta_t scales J Poisson series with static
rates lambda_j; theta evolves by a scaled-beta transition with discount
factor gamma. The package provides the special functions and densities of
the model, a simulator, a fully adapted particle-learning filter, a
forward-filtering backward-sampling Gibbs sampler, evaluation metrics and
a command-line front end.
"""

from .core import (
    CountMatrix,
    EnvPosterior,
    FixedGamma,
    GammaGrid,
    ModelConfig,
    SuffStats,
    filter_update,
    prior_propagate,
    sample_lambdas,
    suffstats_update,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateFilterError,
    DomainError,
    MPSBError,
    SamplerInefficiencyError,
    UndefinedMetricError,
)
from .ffbs import GibbsConfig, PosteriorDraws, backward_sample, forward_filter, gibbs_run
from .pl import FilterState, gamma_posterior, posterior_summary
from .simulator import SimulationTrace, replay_check, simulate
from .special import ChfArgs, chf_1f1_log, log_beta_fn, log_gamma_fn

__version__ = "0.1.0"
