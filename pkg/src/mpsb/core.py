"""Model types and the conjugate recursions shared by the filter and the Gibbs sampler.

Gamma distributions are parameterised by shape and *rate* everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DomainError

DEFAULT_ALPHA0 = 10.0
DEFAULT_BETA0 = 10.0
DEFAULT_LAMBDA_PRIOR = (2.0, 1.0)
GRID_LO = 0.001
GRID_HI = 0.999


@dataclass(frozen=True)
class FixedGamma:
    value: float

    def __post_init__(self):
        if not 0.0 < self.value < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.value}")

    def grid(self):
        return np.array([self.value])


@dataclass(frozen=True)
class GammaGrid:
    """Discrete uniform prior on K equally spaced points of [lo, hi]."""

    K: int = 30
    lo: float = GRID_LO
    hi: float = GRID_HI

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 2:
            raise ConfigError(f"gamma grid needs K >= 2, got {self.K}")
        if not 0.0 < self.lo < self.hi < 1.0:
            raise ConfigError("gamma grid bounds must satisfy 0 < lo < hi < 1")

    def grid(self):
        return np.linspace(self.lo, self.hi, int(self.K))


GammaMode = Union[FixedGamma, GammaGrid]


@dataclass(frozen=True)
class ModelConfig:
    J: int
    alpha0: float = DEFAULT_ALPHA0
    beta0: float = DEFAULT_BETA0
    lambda_priors: Optional[Tuple[Tuple[float, float], ...]] = None
    gamma_mode: GammaMode = field(default_factory=GammaGrid)
    n_particles: int = 1000
    seed: int = 0
    propagation: str = "sis"
    resampling: str = "systematic"
    # "grid-track": DMNB terms use alpha/beta recursions run under each grid gamma;
    # "particle-mean": they use particle averages of the environment track
    gamma_likelihood: str = "grid-track"
    # pins lambda for every particle and disables its learning
    fixed_lambdas: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 1:
            raise ConfigError("J must be a positive integer")
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ConfigError("alpha0 and beta0 must be positive")
        priors = self.lambda_priors
        if priors is None:
            priors = tuple(DEFAULT_LAMBDA_PRIOR for _ in range(self.J))
        priors = tuple((float(a), float(b)) for a, b in priors)
        if len(priors) != self.J:
            raise ConfigError(f"expected {self.J} lambda priors, got {len(priors)}")
        if any(a <= 0 or b <= 0 for a, b in priors):
            raise ConfigError("lambda prior parameters must be positive")
        object.__setattr__(self, "lambda_priors", priors)
        if self.n_particles < 2:
            raise ConfigError("need at least two particles")
        if self.propagation not in ("hgb", "sis"):
            raise ConfigError(f"unknown propagation mode {self.propagation!r}")
        if self.resampling not in ("systematic", "multinomial"):
            raise ConfigError(f"unknown resampling scheme {self.resampling!r}")
        if self.gamma_likelihood not in ("grid-track", "particle-mean"):
            raise ConfigError(f"unknown gamma likelihood {self.gamma_likelihood!r}")
        if self.fixed_lambdas is not None:
            lam = tuple(float(v) for v in self.fixed_lambdas)
            if len(lam) != self.J or any(v <= 0 for v in lam):
                raise ConfigError("fixed_lambdas must hold J positive values")
            object.__setattr__(self, "fixed_lambdas", lam)

    @property
    def prior_a(self):
        return np.array([a for a, _ in self.lambda_priors])

    @property
    def prior_b(self):
        return np.array([b for _, b in self.lambda_priors])


@dataclass(frozen=True)
class EnvPosterior:
    """Gamma(alpha, beta) law of the common environment."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta) and self.alpha > 0 and self.beta > 0):
            raise DomainError(f"environment posterior must be positive and finite, got {self}")

    @property
    def mean(self):
        return self.alpha / self.beta


@dataclass(frozen=True)
class SuffStats:
    """Per-series Gamma(a_j, b_j) full-conditional parameters for lambda."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise DomainError("sufficient statistics must be two equal-length vectors")
        if np.any(a <= 0) or np.any(b <= 0):
            raise DomainError("sufficient statistics must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_config(cls, config: ModelConfig):
        return cls(config.prior_a, config.prior_b)

    def __eq__(self, other):
        return isinstance(other, SuffStats) and np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)


@dataclass(frozen=True)
class CountMatrix:
    """J x T grid of non-negative integer counts with labels."""

    values: np.ndarray
    series_labels: Tuple[str, ...] = ()
    time_labels: Tuple[int, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 2:
            raise DomainError("count matrix must be two-dimensional (J x T)")
        if vals.size and (np.any(vals < 0) or not np.all(np.asarray(vals, float) == np.floor(np.asarray(vals, float)))):
            raise DomainError("counts must be non-negative integers")
        vals = np.asarray(vals, dtype=np.int64)
        object.__setattr__(self, "values", vals)
        J, T = vals.shape
        labels = tuple(self.series_labels) or tuple(f"y{j + 1}" for j in range(J))
        times = tuple(int(t) for t in self.time_labels) or tuple(range(1, T + 1))
        if len(labels) != J or len(times) != T:
            raise DomainError("label lengths do not match the count matrix")
        object.__setattr__(self, "series_labels", labels)
        object.__setattr__(self, "time_labels", times)

    @property
    def J(self):
        return self.values.shape[0]

    @property
    def T(self):
        return self.values.shape[1]

    def column(self, t):
        return self.values[:, t]

    def __eq__(self, other):
        return (
            isinstance(other, CountMatrix)
            and np.array_equal(self.values, other.values)
            and self.series_labels == other.series_labels
            and self.time_labels == other.time_labels
        )


def _check_gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if np.any((g <= 0) | (g >= 1)):
        raise DomainError("gamma must lie in (0, 1)")


# Array kernels. The filter, the forward filter and the scalar API below all go
# through these two functions so the recursions agree to the last bit.


def propagate_arrays(alpha, beta, gamma):
    return gamma * alpha, gamma * beta


def update_arrays(alpha, beta, count_total, lambda_sum):
    return alpha + count_total, beta + lambda_sum


def prior_propagate(env: EnvPosterior, gamma: float) -> EnvPosterior:
    """Gamma(alpha, beta) -> Gamma(gamma*alpha, gamma*beta): mean kept, variance inflated by 1/gamma."""
    _check_gamma(gamma)
    alpha, beta = propagate_arrays(env.alpha, env.beta, gamma)
    return EnvPosterior(float(alpha), float(beta))


def filter_update(env_prior: EnvPosterior, counts_t: Sequence[int], lambdas: Sequence[float]) -> EnvPosterior:
    """Condition the propagated prior on one column of counts."""
    y = np.asarray(counts_t)
    lam = np.asarray(lambdas, dtype=float)
    if y.shape != lam.shape or y.ndim != 1:
        raise DomainError("counts and lambdas must be vectors of equal length")
    if np.any(y < 0) or np.any(lam <= 0):
        raise DomainError("counts must be >= 0 and lambdas > 0")
    alpha, beta = update_arrays(env_prior.alpha, env_prior.beta, y.sum(), lam.sum())
    return EnvPosterior(float(alpha), float(beta))


def suffstats_update(s: SuffStats, theta_next: float, counts_next: Sequence[int]) -> SuffStats:
    """a_j += y_j and b_j += theta for every series."""
    y = np.asarray(counts_next)
    if y.shape != s.a.shape:
        raise DomainError("count vector length does not match sufficient statistics")
    if not theta_next > 0:
        raise DomainError("theta must be positive")
    return SuffStats(s.a + y, s.b + theta_next)


def sample_lambdas(s: SuffStats, rng: np.random.Generator) -> np.ndarray:
    """Independent Gamma(a_j, b_j) draws, rate parameterisation."""
    return rng.gamma(s.a, 1.0 / s.b)
