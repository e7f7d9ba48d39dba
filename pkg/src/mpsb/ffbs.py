"""Gibbs sampler with forward filtering / backward sampling of the environment.

Given lambda the environment path is sampled exactly: the forward pass runs
the conjugate Gamma recursion and the backward pass draws

    theta_T ~ Gamma(alpha_T, beta_T),
    theta_t = gamma * theta_{t+1} + Gamma((1 - gamma) * alpha_t, beta_t),

using the filtered (alpha_t, beta_t) of the step being sampled. Given the
path, each lambda_j has a Gamma(a_j + sum_t Y_jt, b_j + sum_t theta_t) full
conditional. The discount factor is held fixed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import CountMatrix, EnvPosterior, ModelConfig, propagate_arrays, update_arrays
from .errors import ConfigError, DomainError


@dataclass(frozen=True)
class GibbsConfig:
    n_iter: int = 21_000
    burn_in: int = 1000
    thin: int = 4
    fixed_gamma: float = 0.3

    def __post_init__(self):
        if int(self.n_iter) != self.n_iter or self.n_iter < 1:
            raise ConfigError("n_iter must be a positive integer")
        if int(self.burn_in) != self.burn_in or not 0 <= self.burn_in < self.n_iter:
            raise ConfigError("burn_in must be a non-negative integer below n_iter")
        if int(self.thin) != self.thin or self.thin < 1:
            raise ConfigError("thin must be a positive integer")
        if not 0.0 < self.fixed_gamma < 1.0:
            raise ConfigError("fixed_gamma must lie in (0, 1)")

    @property
    def n_draws(self):
        return (self.n_iter - self.burn_in) // self.thin

    @classmethod
    def for_draws(cls, n_draws, burn_in=1000, thin=4, fixed_gamma=0.3):
        """Config that retains exactly ``n_draws`` samples."""
        return cls(burn_in + n_draws * thin, burn_in, thin, fixed_gamma)


@dataclass(frozen=True)
class PosteriorDraws:
    theta_paths: np.ndarray
    lambda_draws: np.ndarray
    series_labels: Tuple[str, ...] = ()

    def __post_init__(self):
        th = np.asarray(self.theta_paths, dtype=float)
        lam = np.asarray(self.lambda_draws, dtype=float)
        if th.ndim != 2 or lam.ndim != 2 or th.shape[0] != lam.shape[0]:
            raise DomainError("theta_paths (draws x T) and lambda_draws (draws x J) must share the draw axis")
        if np.any(th <= 0) or np.any(lam <= 0):
            raise DomainError("posterior draws must be positive")
        object.__setattr__(self, "theta_paths", th)
        object.__setattr__(self, "lambda_draws", lam)
        labels = tuple(self.series_labels) or tuple(f"y{j + 1}" for j in range(lam.shape[1]))
        object.__setattr__(self, "series_labels", labels)

    @property
    def n_draws(self):
        return self.theta_paths.shape[0]

    @property
    def rates(self):
        """Draws of theta_t * lambda_j, shape (draws, J, T)."""
        return self.lambda_draws[:, :, None] * self.theta_paths[:, None, :]


def _values(counts):
    return counts.values if isinstance(counts, CountMatrix) else np.asarray(counts)


def _forward_arrays(totals, lambda_sum, gamma, alpha0, beta0):
    # plain-float loop through the shared kernels: exact and cheap for small T
    T = len(totals)
    alpha = np.empty(T)
    beta = np.empty(T)
    a, b = float(alpha0), float(beta0)
    for t in range(T):
        pa, pb = propagate_arrays(a, b, gamma)
        a, b = update_arrays(pa, pb, int(totals[t]), lambda_sum)
        alpha[t], beta[t] = a, b
    return alpha, beta


def forward_filter(counts, lambdas, gamma, alpha0, beta0) -> List[EnvPosterior]:
    """Filtered Gamma(alpha_t, beta_t) laws of the environment for t = 1..T."""
    y = _values(counts)
    lam = np.asarray(lambdas, dtype=float)
    if y.ndim != 2 or lam.shape != (y.shape[0],):
        raise DomainError(f"need one lambda per series: counts {y.shape}, lambdas {lam.shape}")
    if np.any(lam <= 0) or not 0.0 < gamma < 1.0 or alpha0 <= 0 or beta0 <= 0:
        raise DomainError("lambdas, alpha0, beta0 must be positive and gamma in (0, 1)")
    # summed as a row of a 2-D array, exactly as the particle filter does
    lam_sum = float(lam[None, :].sum(axis=1)[0])
    alpha, beta = _forward_arrays(y.sum(axis=0), lam_sum, gamma, alpha0, beta0)
    return [EnvPosterior(float(a), float(b)) for a, b in zip(alpha, beta)]


def _backward_arrays(alpha, beta, gamma, rng):
    T = alpha.size
    shapes = np.empty(T)
    shapes[-1] = alpha[-1]
    shapes[:-1] = (1.0 - gamma) * alpha[:-1]
    x = rng.gamma(shapes, 1.0 / beta)
    theta = np.empty(T)
    nxt = x[-1]
    theta[-1] = nxt
    for t in range(T - 2, -1, -1):
        nxt = gamma * nxt + x[t]
        theta[t] = nxt
    return np.maximum(theta, np.finfo(float).tiny)


def backward_sample(filtered: Sequence[EnvPosterior], gamma, rng: np.random.Generator) -> np.ndarray:
    """One environment path theta_1..theta_T from the joint smoothing law."""
    if len(filtered) == 0:
        raise DomainError("need at least one filtered distribution")
    if not 0.0 < gamma < 1.0:
        raise DomainError("gamma must lie in (0, 1)")
    alpha = np.array([f.alpha for f in filtered])
    beta = np.array([f.beta for f in filtered])
    return _backward_arrays(alpha, beta, gamma, rng)


def gibbs_run(counts: CountMatrix, config: ModelConfig, g: GibbsConfig, rng: np.random.Generator) -> PosteriorDraws:
    """Run one chain and return the retained draws.

    Series are processed in sorted-label order and mapped back afterwards,
    so relabelling the input permutes the output and nothing else. With
    ``config.fixed_lambdas`` set, only the environment path is sampled.
    """
    if not isinstance(counts, CountMatrix):
        counts = CountMatrix(np.asarray(counts))
    if counts.J != config.J:
        raise ConfigError(f"config has J={config.J} but the data has {counts.J} series")
    order = np.argsort(np.array(counts.series_labels), kind="stable")
    y = counts.values[order]
    a0 = config.prior_a[order]
    b0 = config.prior_b[order]
    post_a = a0 + y.sum(axis=1)
    totals = y.sum(axis=0)
    gamma = g.fixed_gamma
    fixed = config.fixed_lambdas is not None
    lam = np.asarray(config.fixed_lambdas)[order] if fixed else post_a / (b0 + counts.T * config.alpha0 / config.beta0)

    theta_out = np.empty((g.n_draws, counts.T))
    lam_out = np.empty((g.n_draws, counts.J))
    kept = 0
    for it in range(g.n_iter):
        lam_sum = float(lam[None, :].sum(axis=1)[0])
        alpha, beta = _forward_arrays(totals, lam_sum, gamma, config.alpha0, config.beta0)
        theta = _backward_arrays(alpha, beta, gamma, rng)
        if not fixed:
            lam = np.maximum(rng.gamma(post_a, 1.0 / (b0 + theta.sum())), np.finfo(float).tiny)
        if it >= g.burn_in and (it - g.burn_in) % g.thin == g.thin - 1:
            theta_out[kept] = theta
            lam_out[kept] = lam
            kept += 1
    inverse = np.argsort(order)
    return PosteriorDraws(theta_out, lam_out[:, inverse], counts.series_labels)


def _chain_task(args):
    counts, config, g, seed = args
    return gibbs_run(counts, config, g, np.random.default_rng(seed))


def gibbs_chains(counts: CountMatrix, config: ModelConfig, g: GibbsConfig, seeds: Sequence[int],
                 workers: Optional[int] = None) -> List[PosteriorDraws]:
    """Independent chains, one per seed, optionally fanned out over processes."""
    tasks = [(counts, config, g, int(s)) for s in seeds]
    if workers is None or workers <= 1 or len(tasks) <= 1:
        return [_chain_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(_chain_task, tasks))


def lag1_autocorrelation(draws) -> np.ndarray:
    """Lag-1 sample autocorrelation of each column of a draws x k array."""
    x = np.asarray(draws, dtype=float)
    x = x - x.mean(axis=0)
    return (x[:-1] * x[1:]).sum(axis=0) / (x * x).sum(axis=0)


QUANTILES = (2.5, 50.0, 97.5)


def smoothed_summary(draws: PosteriorDraws):
    """Per-time posterior means and equal-tailed 95% bands of theta and the rates."""
    rates = draws.rates
    return {
        "theta_mean": draws.theta_paths.mean(axis=0),
        "theta_q": np.percentile(draws.theta_paths, QUANTILES, axis=0),
        "rate_mean": rates.mean(axis=0),
        "rate_q": np.percentile(rates, QUANTILES, axis=0),
        "lambda_mean": draws.lambda_draws.mean(axis=0),
        "lambda_q": np.percentile(draws.lambda_draws, QUANTILES, axis=0),
    }
