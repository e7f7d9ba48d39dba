"""Fully adapted particle learning for the MPSB model.

Each step resamples particles by the one-step predictive (MCHG-NB) weight,
propagates the environment exactly (HGB rejection) or by importance
resampling from the transition (SIS), refreshes the lambda sufficient
statistics and resamples lambda. The discount factor is learned on a
discrete grid from DMNB marginal likelihoods, each grid value carrying its
own environment recursion driven by the particle-average lambdas.

Randomness comes from a :class:`~mpsb.rng.KeyedStream`, keyed by the time
index and particle index, so a run is a pure function of (counts, config).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np
from scipy.special import logsumexp

from . import rng as krng
from .core import FixedGamma, GammaGrid, ModelConfig, EnvPosterior, SuffStats, propagate_arrays, update_arrays
from .distributions import dmnb_logpmf, hgb_rejection_batch, mchg_nb_log_predictive, poisson_loglik
from .errors import DegenerateFilterError, DomainError, SamplerInefficiencyError

log = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class Particle:
    theta: float
    lambdas: np.ndarray
    stats: SuffStats
    env: EnvPosterior
    gamma: float


@dataclass
class FilterState:
    """The whole online state: particle arrays plus the gamma grid posterior.

    Particle quantities are stored column-wise: ``theta`` and the environment
    track have shape (N,), lambdas and sufficient statistics (N, J).
    """

    config: ModelConfig
    t: int
    theta: np.ndarray
    lambdas: np.ndarray
    stat_a: np.ndarray
    stat_b: np.ndarray
    env_alpha: np.ndarray
    env_beta: np.ndarray
    gammas: np.ndarray
    gamma_grid: np.ndarray
    gamma_log_weights: np.ndarray
    # environment recursions run separately under each grid value of gamma
    grid_alpha: np.ndarray
    grid_beta: np.ndarray
    ess_history: List[float] = field(default_factory=list)
    propagation_history: List[str] = field(default_factory=list)
    propagation_mode: str = "sis"

    @property
    def N(self):
        return self.theta.shape[0]

    @property
    def J(self):
        return self.lambdas.shape[1]

    def particle(self, i) -> Particle:
        return Particle(
            float(self.theta[i]),
            self.lambdas[i].copy(),
            SuffStats(self.stat_a[i].copy(), self.stat_b[i].copy()),
            EnvPosterior(float(self.env_alpha[i]), float(self.env_beta[i])),
            float(self.gammas[i]),
        )

    @property
    def particles(self):
        return [self.particle(i) for i in range(self.N)]

    def copy(self):
        return replace(
            self,
            theta=self.theta.copy(),
            lambdas=self.lambdas.copy(),
            stat_a=self.stat_a.copy(),
            stat_b=self.stat_b.copy(),
            env_alpha=self.env_alpha.copy(),
            env_beta=self.env_beta.copy(),
            gammas=self.gammas.copy(),
            gamma_grid=self.gamma_grid.copy(),
            gamma_log_weights=self.gamma_log_weights.copy(),
            grid_alpha=self.grid_alpha.copy(),
            grid_beta=self.grid_beta.copy(),
            ess_history=list(self.ess_history),
            propagation_history=list(self.propagation_history),
        )

    def take(self, idx):
        """Reorder or resample every particle array by ``idx`` in place."""
        for name in ("theta", "lambdas", "stat_a", "stat_b", "env_alpha", "env_beta", "gammas"):
            setattr(self, name, getattr(self, name)[idx])


def ess(log_weights) -> float:
    """Effective sample size 1 / sum(w_i^2) of normalised weights."""
    lw = np.asarray(log_weights, dtype=float)
    lse = logsumexp(lw)
    if not np.isfinite(lse):
        raise DegenerateFilterError("all weights are zero")
    w = np.exp(lw - lse)
    return float(1.0 / np.sum(w * w))


def normalise_log_weights(log_weights):
    """Max-subtracted exponentiation; returns weights summing to one."""
    lw = np.asarray(log_weights, dtype=float)
    top = np.max(lw)
    if not np.isfinite(top):
        raise DegenerateFilterError("all weights underflowed")
    w = np.exp(lw - top)
    return w / w.sum()


def systematic_resample(weights, u):
    """Indices for systematic resampling with a single uniform ``u`` in (0, 1)."""
    n = len(weights)
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    positions = (np.arange(n) + u) / n
    return np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)


def multinomial_resample(weights, uniforms):
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, np.sort(uniforms), side="right"), len(weights) - 1)


def init(config: ModelConfig, stream: Optional[krng.KeyedStream] = None) -> FilterState:
    """Draw N particles from the priors and set a uniform gamma posterior."""
    stream = stream or krng.KeyedStream(config.seed)
    N, J = config.n_particles, config.J
    ids = np.arange(N)
    u = stream.uniforms(0, krng.INIT_THETA, ids, 2)
    theta = np.maximum(krng.gamma_variates(config.alpha0, config.beta0, u[:, 0], u[:, 1]), _TINY)
    a0 = np.broadcast_to(config.prior_a, (N, J))
    b0 = np.broadcast_to(config.prior_b, (N, J))
    if config.fixed_lambdas is not None:
        lambdas = np.tile(np.asarray(config.fixed_lambdas), (N, 1))
    else:
        ul = stream.uniforms(0, krng.INIT_LAMBDA, ids, 2 * J)
        lambdas = krng.gamma_variates(a0, b0, ul[:, :J], ul[:, J:])
    grid = config.gamma_mode.grid()
    gammas = np.full(N, grid[0]) if isinstance(config.gamma_mode, FixedGamma) else np.full(N, np.nan)
    return FilterState(
        config=config,
        t=0,
        theta=theta,
        lambdas=np.maximum(lambdas, _TINY),
        stat_a=np.array(a0, dtype=float),
        stat_b=np.array(b0, dtype=float),
        env_alpha=np.full(N, float(config.alpha0)),
        env_beta=np.full(N, float(config.beta0)),
        gammas=gammas,
        gamma_grid=grid,
        gamma_log_weights=np.zeros(grid.size),
        grid_alpha=np.full(grid.size, float(config.alpha0)),
        grid_beta=np.full(grid.size, float(config.beta0)),
        propagation_mode=config.propagation,
    )


def _pick_gammas(state: FilterState, stream, step):
    if isinstance(state.config.gamma_mode, FixedGamma):
        return np.full(state.N, state.gamma_grid[0])
    probs = normalise_log_weights(state.gamma_log_weights)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    u = stream.uniforms(step, krng.GAMMA_PICK, np.arange(state.N), 1)[:, 0]
    return state.gamma_grid[np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)]


def _resample_indices(weights, scheme, stream, step, purpose):
    if scheme == "systematic":
        return systematic_resample(weights, stream.uniform(step, purpose))
    u = stream.uniforms(step, purpose, np.arange(len(weights)), 1)[:, 0]
    return multinomial_resample(weights, u)


def _propagate_hgb(state, y_total, stream, step):
    g = state.gammas
    upper = state.theta / g
    ids = np.arange(state.N)

    def uniforms(rows, offsets, n):
        return stream.uniforms(step, krng.PROPAGATE, ids[rows], n, offset=offsets)

    return hgb_rejection_batch(
        y_total + g * state.env_alpha,
        (1.0 - g) * state.env_alpha,
        state.lambdas.sum(axis=1),
        upper,
        uniforms,
        envelope="tilted",
    )


def _propagate_sis(state, y, log_pred, stream, step):
    """Transition proposal reweighted by likelihood over ancestor predictive.

    The division by the ancestor's predictive weight makes the pair target
    the same exact propagation law as the HGB path.
    """
    g = state.gammas
    u = stream.uniforms(step, krng.PROPAGATE, np.arange(state.N), 4)
    eps = krng.beta_variates(g * state.env_alpha, (1.0 - g) * state.env_alpha, u)
    theta_new = np.maximum(state.theta / g * eps, _TINY)
    lw = poisson_loglik(y, theta_new, state.lambdas) - log_pred
    w = normalise_log_weights(lw)
    idx = _resample_indices(w, state.config.resampling, stream, step, krng.SIS_RESAMPLE)
    return theta_new, idx


def step(state: FilterState, counts_next, stream: Optional[krng.KeyedStream] = None) -> FilterState:
    """Advance the filter by one observation vector; returns a new state."""
    y = np.asarray(counts_next)
    if y.shape != (state.J,):
        raise DomainError(f"expected {state.J} counts, got shape {y.shape}")
    if np.any(y < 0):
        raise DomainError("counts must be non-negative")
    y = y.astype(np.int64)
    stream = stream or krng.KeyedStream(state.config.seed)
    cfg = state.config
    new = state.copy()
    k = state.t + 1
    y_total = int(y.sum())

    # 1. resample by the predictive likelihood
    new.gammas = _pick_gammas(state, stream, k)
    log_pred = np.asarray(mchg_nb_log_predictive(y, new.theta, new.lambdas, new.gammas, new.env_alpha))
    try:
        w = normalise_log_weights(log_pred)
    except DegenerateFilterError as exc:
        raise DegenerateFilterError(str(exc), state=state) from None
    new.ess_history.append(float(1.0 / np.sum(w * w)))
    idx = _resample_indices(w, cfg.resampling, stream, k, krng.RESAMPLE)
    new.take(idx)
    log_pred = log_pred[idx]

    # 2. propagate
    mode = cfg.propagation
    if mode == "hgb":
        try:
            theta_new = np.maximum(_propagate_hgb(new, y_total, stream, k), _TINY)
        except SamplerInefficiencyError as exc:
            log.warning("t=%d: %s; falling back to SIS for this step", k, exc)
            mode = "sis"
    if mode == "sis":
        try:
            theta_new, idx2 = _propagate_sis(new, y, log_pred, stream, k)
        except DegenerateFilterError as exc:
            raise DegenerateFilterError(str(exc), state=state) from None
        new.take(idx2)
        theta_new = theta_new[idx2]
    new.propagation_history.append(mode)

    # 3. update sufficient statistics and the environment track
    lam_sum = new.lambdas.sum(axis=1)
    new.stat_a = new.stat_a + y
    new.stat_b = new.stat_b + theta_new[:, None]
    pa, pb = propagate_arrays(new.env_alpha, new.env_beta, new.gammas)
    new.env_alpha, new.env_beta = update_arrays(pa, pb, y_total, lam_sum)
    new.theta = theta_new

    # 4. refresh lambda
    if cfg.fixed_lambdas is None:
        J = state.J
        u = stream.uniforms(k, krng.LAMBDA, np.arange(state.N), 2 * J)
        new.lambdas = np.maximum(krng.gamma_variates(new.stat_a, new.stat_b, u[:, :J], u[:, J:]), _TINY)

    # gamma grid update from the particle average of the refreshed lambdas
    if isinstance(cfg.gamma_mode, GammaGrid):
        lam_bar = new.lambdas.mean(axis=0)
        g = new.gamma_grid
        if cfg.gamma_likelihood == "grid-track":
            ga, gb = state.grid_alpha, state.grid_beta
        else:
            ga = np.full(g.size, float(np.mean(state.env_alpha)))
            gb = np.full(g.size, float(np.mean(state.env_beta)))
        new.gamma_log_weights = new.gamma_log_weights + np.asarray(
            dmnb_logpmf(np.broadcast_to(y, (g.size, state.J)), g * ga, lam_bar, g * gb)
        )
        pa, pb = propagate_arrays(ga, gb, g)
        new.grid_alpha, new.grid_beta = update_arrays(pa, pb, y_total, lam_bar.sum())
    new.t = k
    return new


def gamma_posterior(state: FilterState):
    """List of (gamma_k, probability) pairs."""
    probs = normalise_log_weights(state.gamma_log_weights)
    return list(zip(state.gamma_grid.tolist(), probs.tolist()))


QUANTILES = (2.5, 50.0, 97.5)


@dataclass
class Summary:
    t: int
    rate_mean: np.ndarray
    rate_q: np.ndarray
    lambda_mean: np.ndarray
    lambda_q: np.ndarray
    theta_mean: float
    theta_q: np.ndarray
    gamma_mean: float
    gamma_mode: float
    ess: float


def posterior_summary(state: FilterState) -> Summary:
    """Particle averages and equal-tailed 95% intervals of the current state."""
    rates = state.theta[:, None] * state.lambdas
    probs = normalise_log_weights(state.gamma_log_weights)
    return Summary(
        t=state.t,
        rate_mean=rates.mean(axis=0),
        rate_q=np.percentile(rates, QUANTILES, axis=0),
        lambda_mean=state.lambdas.mean(axis=0),
        lambda_q=np.percentile(state.lambdas, QUANTILES, axis=0),
        theta_mean=float(state.theta.mean()),
        theta_q=np.percentile(state.theta, QUANTILES),
        gamma_mean=float(np.dot(probs, state.gamma_grid)),
        gamma_mode=float(state.gamma_grid[np.argmax(probs)]),
        ess=state.ess_history[-1] if state.ess_history else float(state.N),
    )


def run(counts, config: ModelConfig, state: Optional[FilterState] = None,
        on_step: Optional[Callable[[FilterState], None]] = None):
    """Filter every column of ``counts`` (a CountMatrix or J x T array).

    Starts from ``state`` when given (e.g. a restored checkpoint), skipping
    the columns it has already absorbed. Returns the final state and the
    per-step summaries.
    """
    values = counts.values if hasattr(counts, "values") else np.asarray(counts)
    stream = krng.KeyedStream(config.seed)
    if state is None:
        state = init(config, stream)
    summaries = []
    for t in range(state.t, values.shape[1]):
        state = step(state, values[:, t], stream)
        summaries.append(posterior_summary(state))
        if on_step is not None:
            on_step(state)
    return state, summaries


def canonical_order(state: FilterState) -> FilterState:
    """Copy with particles sorted lexicographically by their full contents."""
    keys = [state.gammas, state.env_beta, state.env_alpha]
    keys += [state.stat_b[:, j] for j in range(state.J)] + [state.stat_a[:, j] for j in range(state.J)]
    keys += [state.lambdas[:, j] for j in range(state.J)] + [state.theta]
    out = state.copy()
    out.take(np.lexsort(keys))
    return out
