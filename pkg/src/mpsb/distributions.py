"""Densities, pmfs and samplers specific to the MPSB model.

All functions work on the log scale and broadcast over numpy arrays, with the
count dimension J on the last axis wherever a vector of counts or rates is
involved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special as sc

from . import rng as krng
from .errors import DomainError, SamplerInefficiencyError
from .special import chf_1f1_log

MIN_ACCEPTANCE = 1e-4
MAX_PROPOSALS = 1_000_000
GOLDEN_ITERS = 200
_EDGE = 1e-12
_MAX_BLOCK_ELEMENTS = 4_000_000
_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GammaParams:
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0 and np.isfinite(self.shape) and np.isfinite(self.rate)):
            raise DomainError(f"Gamma parameters must be positive and finite, got {self}")

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def var(self):
        return self.shape / self.rate**2


@dataclass(frozen=True)
class HgbParams:
    """Hypergeometric-beta density x^(a-1) (1 - x/upper)^(b-1) e^(-c x) on (0, upper)."""

    a: float
    b: float
    c: float
    upper: float

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.upper)
        if not all(np.isfinite(v) for v in vals):
            raise DomainError("HGB parameters must be finite")
        if self.a <= 0 or self.b <= 0 or self.upper <= 0 or self.c < 0:
            raise DomainError(f"invalid HGB parameters {self}")


@dataclass(frozen=True)
class DmnbParams:
    """DMNB parameters: shape r = gamma*alpha, per-series rates, scale = gamma*beta."""

    r: float
    rates: Sequence[float]
    scale: float

    def __post_init__(self):
        rates = np.asarray(self.rates, dtype=float)
        if rates.ndim != 1 or rates.size < 1:
            raise DomainError("DMNB needs at least one rate")
        if not (self.r > 0 and self.scale > 0 and np.all(rates > 0)):
            raise DomainError(f"DMNB parameters must be positive, got {self}")


def _check_finite(*xs):
    for x in xs:
        if not np.all(np.isfinite(np.asarray(x, dtype=float))):
            raise DomainError("non-finite input")


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _check_counts(y):
    y = np.asarray(y)
    if np.any(y < 0) or np.any(np.asarray(y, dtype=float) != np.floor(np.asarray(y, dtype=float))):
        raise DomainError("counts must be non-negative integers")
    return np.asarray(y, dtype=float)


# ---------------------------------------------------------------------------
# scaled beta transition


def scaled_beta_transition_logpdf(theta_next, theta_prev, alpha_prev, gamma):
    """log p(theta_next | theta_prev) for theta_next = (theta_prev / gamma) * Beta(gamma*alpha, (1-gamma)*alpha).

    Points outside (0, theta_prev/gamma) get -inf.
    """
    _check_finite(theta_next, theta_prev, alpha_prev, gamma)
    theta_next, theta_prev, alpha_prev, gamma = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (theta_next, theta_prev, alpha_prev, gamma))
    )
    if np.any(theta_prev <= 0) or np.any(alpha_prev <= 0) or np.any((gamma <= 0) | (gamma >= 1)):
        raise DomainError("need theta_prev > 0, alpha_prev > 0 and 0 < gamma < 1")
    u = gamma * theta_next / theta_prev
    inside = (theta_next > 0) & (u < 1)
    p, q = gamma * alpha_prev, (1 - gamma) * alpha_prev
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (
            np.log(gamma / theta_prev)
            + (p - 1) * np.log(u)
            + (q - 1) * np.log1p(-u)
            - sc.betaln(p, q)
        )
    return _out(np.where(inside, val, -np.inf))


# ---------------------------------------------------------------------------
# hypergeometric beta


def _hgb_args(p, b, c, upper):
    if isinstance(p, HgbParams):
        return p.a, p.b, p.c, p.upper
    return p, b, c, upper


def hgb_log_norm_const(p, b=None, c=None, upper=None):
    """ln of the integral of x^(a-1) (1 - x/upper)^(b-1) e^(-c x) over (0, upper)."""
    a, b, c, upper = _hgb_args(p, b, c, upper)
    a, b, c, upper = (np.asarray(v, dtype=float) for v in (a, b, c, upper))
    _check_finite(a, b, c, upper)
    if np.any(a <= 0) or np.any(b <= 0) or np.any(c < 0) or np.any(upper <= 0):
        raise DomainError("invalid HGB parameters")
    return _out(a * np.log(upper) + sc.betaln(a, b) + chf_1f1_log(a, a + b, c * upper))


def hgb_logpdf(x, p, b=None, c=None, upper=None):
    """Normalised HGB log-density; -inf outside (0, upper)."""
    a, b, c, upper = _hgb_args(p, b, c, upper)
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < upper)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (a - 1) * np.log(x) + (b - 1) * np.log1p(-x / upper) - c * x
    return _out(np.where(inside, val - hgb_log_norm_const(a, b, c, upper), -np.inf))


def _unit_log_kernel(u, a, b, s):
    return (a - 1) * np.log(u) + (b - 1) * np.log1p(-u) - s * u


def _golden_max(f, lo, hi, iters=GOLDEN_ITERS, tol=1e-14):
    """Vectorised golden-section search; returns (argmax, max) per element."""
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        left = f1 >= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        new = np.where(left, hi - _INVPHI * (hi - lo), lo + _INVPHI * (hi - lo))
        fnew = f(new)
        x2, f2, x1, f1 = (
            np.where(left, x1, new),
            np.where(left, f1, fnew),
            np.where(left, new, x2),
            np.where(left, fnew, f2),
        )
        if np.all(hi - lo < tol):
            break
    return np.where(f1 >= f2, x1, x2), np.maximum(f1, f2)


def hgb_log_envelope(a, b, s):
    """Maximum of the unit-interval kernel u^(a-1) (1-u)^(b-1) e^(-s u).

    Golden-section search on [1e-12, 1 - 1e-12]; the endpoints are compared
    too, which covers kernels that are monotone or unbounded at an edge.
    """
    a, b, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, s)))
    kernel = lambda u: _unit_log_kernel(u, a, b, s)  # noqa: E731
    _, best = _golden_max(kernel, np.full(a.shape, _EDGE), np.full(a.shape, 1.0 - _EDGE))
    best = np.maximum(best, kernel(np.full(a.shape, _EDGE)))
    return np.maximum(best, kernel(np.full(a.shape, 1.0 - _EDGE)))


def _log_tilt_max(d, s):
    # max over u in (0, 1] of d ln u - s u
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(s > 0, np.minimum(d / np.where(s > 0, s, 1.0), 1.0), 1.0)
        return np.where(d > 0, d * np.log(u), 0.0) - s * u


def beta_envelope_shift(a, b, s):
    """Shape shift d for the Beta(a - d, b) proposal of the tilted kernel.

    The ratio target/proposal is proportional to u^d e^(-s u), bounded for
    any 0 <= d < a; d is chosen to maximise the exact acceptance rate
    B(a, b) M(a; a+b; -s) / (B(a-d, b) max_u u^d e^(-s u)).
    """
    a, b, s = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, s)))

    def gain(d):
        return -sc.betaln(a - d, b) - _log_tilt_max(d, s)

    d, _ = _golden_max(gain, np.zeros(a.shape), a * (1.0 - 1e-3), iters=80, tol=1e-10)
    return np.where(gain(d) >= gain(np.zeros(a.shape)), d, 0.0)


@dataclass
class SamplerStats:
    """Proposal bookkeeping filled in by the rejection sampler."""

    proposals: int = 0
    accepted: int = 0

    @property
    def acceptance_rate(self):
        return self.accepted / self.proposals if self.proposals else float("nan")


UniformSource = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def generator_source(rng: np.random.Generator) -> UniformSource:
    """Adapt a numpy Generator to the (rows, offsets, n) uniform interface."""

    def draw(rows, offsets, n):
        return rng.random((len(rows), n))

    return draw


def hgb_rejection_batch(a, b, c, upper, uniforms: UniformSource, stats: Optional[SamplerStats] = None,
                        envelope: str = "uniform"):
    """Independent draws from HGB(a[i], b[i], c[i]) on (0, upper[i]).

    ``envelope="uniform"`` proposes uniformly on the support with the kernel
    maximum as envelope. ``envelope="tilted"`` picks, per row, the better of
    two proposals on the unit scale u = x / upper, with s = c * upper:

    * Beta(a - d, b), accepted with probability u^d e^(-s u) / max;
    * Gamma(a, rate s) truncated to (0, 1), accepted with probability
      (1 - u)^(b - 1) (only when b >= 1).

    Both stay efficient for large tilts where the uniform envelope fails.

    ``uniforms(rows, offsets, n)`` must return ``n`` uniforms for each
    requested row, starting at that row's per-row draw offset; a proposal
    consumes 2 (uniform) or 5 (tilted) of them. The first accepted proposal in
    counter order is returned, so draws do not depend on batching.

    Raises SamplerInefficiencyError when the exact acceptance probability of
    any row is below 1e-4 or a row exhausts 10^6 proposals.
    """
    if envelope not in ("uniform", "tilted"):
        raise DomainError(f"unknown envelope {envelope!r}")
    a, b, c, upper = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, upper)))
    a, b, c, upper = (np.atleast_1d(v).ravel() for v in (a, b, c, upper))
    _check_finite(a, b, c, upper)
    if np.any(a <= 0) or np.any(b <= 0) or np.any(c < 0) or np.any(upper <= 0):
        raise DomainError("invalid HGB parameters")
    s = c * upper
    log_area = sc.betaln(a, b) + chf_1f1_log(a, a + b, s)
    if envelope == "uniform":
        log_max = hgb_log_envelope(a, b, s) + 1e-9
        log_accept = log_area - log_max
        width = 2
    else:
        d = beta_envelope_shift(a, b, s)
        log_max = _log_tilt_max(d, s) + 1e-9
        log_accept = log_area - sc.betaln(a - d, b) - log_max
        with np.errstate(divide="ignore"):
            gamma_accept = np.where(b >= 1.0, log_area + a * np.log(s) - sc.gammaln(a), -np.inf)
        use_gamma = gamma_accept > log_accept
        log_max = np.where(use_gamma, 0.0, log_max)
        log_accept = np.maximum(log_accept, gamma_accept)
        width = 5
    accept_prob = np.exp(np.minimum(log_accept, 0.0))
    worst = float(accept_prob.min())
    if worst < MIN_ACCEPTANCE:
        raise SamplerInefficiencyError(
            f"HGB rejection acceptance rate {worst:.3g} below {MIN_ACCEPTANCE}; use SIS propagation",
            acceptance_rate=worst,
        )

    n = a.size
    out = np.empty(n)
    used = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    block = 8
    while active.size:
        u = uniforms(active, width * used[active], width * block).reshape(active.size, block, width)
        aa, bb, ss = a[active, None], b[active, None], s[active, None]
        if envelope == "uniform":
            prop, gate = u[..., 0], u[..., 1]
            log_ratio = _unit_log_kernel(prop, aa, bb, ss)
        else:
            dd, ug = d[active, None], use_gamma[active, None]
            gate = u[..., 4]
            beta_prop = np.clip(krng.beta_variates(aa - dd, bb, u[..., :4]), _EDGE, 1.0 - _EDGE)
            with np.errstate(divide="ignore", over="ignore"):
                gamma_prop = np.exp(krng.log_gamma_variates(aa, u[..., 0], u[..., 1])) / np.where(ss > 0, ss, 1.0)
            inside = gamma_prop < 1.0
            gamma_prop = np.where(inside, np.maximum(gamma_prop, _EDGE), 0.5)
            prop = np.where(ug, gamma_prop, beta_prop)
            with np.errstate(invalid="ignore"):
                log_ratio = np.where(
                    ug,
                    np.where(inside, (bb - 1.0) * np.log1p(-gamma_prop), -np.inf),
                    dd * np.log(beta_prop) - ss * beta_prop,
                )
        ok = np.log(gate) <= log_ratio - log_max[active, None]
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        rows = active[hit]
        out[rows] = prop[hit, first[hit]] * upper[rows]
        used[rows] += first[hit] + 1
        used[active[~hit]] += block
        active = active[~hit]
        if active.size and used[active].max() >= MAX_PROPOSALS:
            raise SamplerInefficiencyError(
                f"HGB rejection exhausted {MAX_PROPOSALS} proposals", acceptance_rate=1.0 / MAX_PROPOSALS
            )
        if active.size:
            block = max(1, min(block * 2, 4096, _MAX_BLOCK_ELEMENTS // (width * active.size)))
    if stats is not None:
        stats.proposals += int(used.sum())
        stats.accepted += n
    return out


def hgb_sample_rejection(p: HgbParams, rng: np.random.Generator, stats: Optional[SamplerStats] = None, size=None,
                         envelope: str = "uniform"):
    """Draw from the normalised HGB density by rejection.

    Returns a float, or an array when ``size`` is given. Pass a
    :class:`SamplerStats` to collect proposal counts.
    """
    if not isinstance(p, HgbParams):
        raise DomainError("expected HgbParams")
    m = 1 if size is None else int(size)
    draws = hgb_rejection_batch(
        np.full(m, p.a), np.full(m, p.b), np.full(m, p.c), np.full(m, p.upper), generator_source(rng), stats, envelope
    )
    return float(draws[0]) if size is None else draws


# ---------------------------------------------------------------------------
# negative binomial family


def dmnb_logpmf(y, p, rates=None, scale=None):
    """log DMNB pmf of a count vector (last axis) given shape r, rates and scale.

    Gamma(r + S) / (Gamma(r) prod y_j!) prod (rate_j / (scale + sum rates))^y_j
    (scale / (scale + sum rates))^r with S = sum y_j.
    Accepts ``dmnb_logpmf(y, DmnbParams)`` or ``dmnb_logpmf(y, r, rates, scale)``.
    """
    if isinstance(p, DmnbParams):
        r, rates, scale = p.r, p.rates, p.scale
    else:
        r = p
    y = _check_counts(y)
    rates = np.asarray(rates, dtype=float)
    r = np.asarray(r, dtype=float)
    scale = np.asarray(scale, dtype=float)
    if y.shape[-1:] != rates.shape[-1:]:
        raise DomainError(f"count vector length {y.shape[-1:]} does not match rates {rates.shape[-1:]}")
    if np.any(r <= 0) or np.any(scale <= 0) or np.any(rates <= 0):
        raise DomainError("DMNB parameters must be positive")
    total = y.sum(axis=-1)
    rate_sum = rates.sum(axis=-1)
    log_denom = np.log(scale + rate_sum)
    val = (
        sc.gammaln(r + total)
        - sc.gammaln(r)
        - sc.gammaln(y + 1).sum(axis=-1)
        + (y * np.log(rates)).sum(axis=-1)
        - total * log_denom
        + r * (np.log(scale) - log_denom)
    )
    return _out(val)


def nb_marginal_logpmf(y, lambda_j, r, scale):
    """log NB(r, lambda_j / (scale + lambda_j)) pmf, the one-series DMNB marginal."""
    y = _check_counts(y)
    lam, r, scale = (np.asarray(v, dtype=float) for v in (lambda_j, r, scale))
    if np.any(lam <= 0) or np.any(r <= 0) or np.any(scale <= 0):
        raise DomainError("NB parameters must be positive")
    log_denom = np.log(scale + lam)
    val = (
        sc.gammaln(r + y)
        - sc.gammaln(r)
        - sc.gammaln(y + 1)
        + y * (np.log(lam) - log_denom)
        + r * (np.log(scale) - log_denom)
    )
    return _out(val)


def mchg_nb_log_predictive(y_next, theta_t, lambdas, gamma, alpha_t):
    """log of the one-step predictive pmf p(y_next | theta_t, lambdas) (MCHG-NB).

    The Poisson likelihood integrated against the scaled-beta transition out of
    theta_t. Counts and rates carry J on the last axis; theta_t, gamma and
    alpha_t broadcast against the leading axes (one entry per particle).
    """
    y = _check_counts(y_next)
    lam = np.asarray(lambdas, dtype=float)
    theta, gamma, alpha = (np.asarray(v, dtype=float) for v in (theta_t, gamma, alpha_t))
    _check_finite(lam, theta, gamma, alpha)
    if y.shape[-1:] != lam.shape[-1:]:
        raise DomainError("count vector and rate vector lengths differ")
    if np.any(lam <= 0) or np.any(theta <= 0) or np.any(alpha <= 0) or np.any((gamma <= 0) | (gamma >= 1)):
        raise DomainError("invalid MCHG-NB parameters")
    total = y.sum(axis=-1)
    lam_sum = lam.sum(axis=-1)
    scaled = theta / gamma
    a = total + gamma * alpha
    b = total + alpha
    val = (
        (y * np.log(lam)).sum(axis=-1)
        - sc.gammaln(y + 1).sum(axis=-1)
        + total * np.log(scaled)
        + sc.gammaln(a)
        + sc.gammaln(alpha)
        - sc.gammaln(b)
        - sc.gammaln(gamma * alpha)
        + chf_1f1_log(a, b, lam_sum * scaled)
    )
    return _out(val)


def poisson_loglik(y, theta, lambdas):
    """sum_j log Pois(y_j; lambda_j * theta), broadcasting theta over leading axes."""
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    theta = np.asarray(theta, dtype=float)
    mu = lam * theta[..., None]
    with np.errstate(divide="ignore"):
        return (y * np.log(mu) - mu - sc.gammaln(y + 1)).sum(axis=-1)


def bivariate_correlation(lambda_i, lambda_j, gamma, beta_prev):
    """Correlation of two series' counts given rates and the previous filter rate."""
    s = gamma * beta_prev
    for v in (lambda_i, lambda_j, gamma, beta_prev):
        if not np.all(np.asarray(v) > 0):
            raise DomainError("bivariate_correlation needs positive arguments")
    return _out(np.sqrt(lambda_i * lambda_j / ((lambda_i + s) * (lambda_j + s))))


def conditional_mean(y_i, lambda_i, lambda_j, gamma, alpha_prev, beta_prev):
    """E[Y_j | Y_i = y_i] under the bivariate DMNB."""
    for v in (lambda_i, lambda_j, gamma, alpha_prev, beta_prev):
        if not np.all(np.asarray(v) > 0):
            raise DomainError("conditional_mean needs positive parameters")
    _check_counts(y_i)
    return _out(lambda_j * (gamma * alpha_prev + np.asarray(y_i, float)) / (lambda_i + gamma * beta_prev))


def dmnb_sample(p: DmnbParams, rng: np.random.Generator, size: int):
    """Draw count vectors from the DMNB through its Gamma-Poisson mixture."""
    rates = np.asarray(p.rates, dtype=float)
    theta = rng.gamma(p.r, 1.0 / p.scale, size=size)
    return rng.poisson(theta[:, None] * rates[None, :])
