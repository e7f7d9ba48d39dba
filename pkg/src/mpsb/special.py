"""Log-scale special functions: log-gamma, log-beta and Kummer's M at negative argument.

Everything here is vectorised over numpy arrays and returns a Python float
when all inputs are scalars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from .errors import ConvergenceError, DomainError

MAX_TERMS = 10_000
SERIES_RTOL = 1e-15
# below this magnitude the Kummer-transformed positive series is always used
SERIES_MAX_C = 30.0
_ASYMPTOTIC_TERMS = 80
_ASYMPTOTIC_RTOL = 1e-17


def _as_float_array(*xs):
    arrs = np.broadcast_arrays(*[np.asarray(x, dtype=float) for x in xs])
    return [np.array(a, dtype=float) for a in arrs]


def _maybe_scalar(out, shape):
    if len(shape) == 0:
        return float(out)
    return out


def log_gamma_fn(x):
    """Return ln Gamma(x) for x > 0."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("log_gamma_fn requires finite x > 0")
    return _maybe_scalar(sc.gammaln(arr), arr.shape)


def log_beta_fn(a, b):
    """Return ln B(a, b) for a, b > 0."""
    a_arr, b_arr = _as_float_array(a, b)
    if not (np.all(np.isfinite(a_arr)) and np.all(np.isfinite(b_arr))):
        raise DomainError("log_beta_fn requires finite arguments")
    if np.any(a_arr <= 0) or np.any(b_arr <= 0):
        raise DomainError("log_beta_fn requires a > 0 and b > 0")
    return _maybe_scalar(sc.betaln(a_arr, b_arr), a_arr.shape)


@dataclass(frozen=True)
class ChfArgs:
    """Parameters of M(a; b; -c): a > 0, b >= a, c >= 0.

    The model only produces b > a; b == a is admitted because M(a; a; -c) = e^{-c}
    is the natural closed-form check.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        _check_chf_domain(np.asarray(self.a, float), np.asarray(self.b, float), np.asarray(self.c, float))


def _check_chf_domain(a, b, c):
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise DomainError("CHF arguments must be finite")
    if np.any(a <= 0):
        raise DomainError("CHF requires a > 0")
    if np.any(b < a):
        raise DomainError("CHF requires b >= a")
    if np.any(c < 0):
        raise DomainError("CHF requires c >= 0")


def log_kummer_series(p, q, z, max_terms=MAX_TERMS, rtol=SERIES_RTOL):
    """ln M(p; q; z) for p, q > 0 and z >= 0 by direct summation in log space.

    All terms are positive, so there is no cancellation. Summation stops once
    the terms are monotonically decreasing with ratio below one and the
    geometric tail bound falls under ``rtol`` times the partial sum.
    """
    p, q, z = _as_float_array(p, q, z)
    shape = p.shape
    p, q, z = p.ravel(), q.ravel(), z.ravel()
    out = np.zeros(p.shape)
    idx = np.flatnonzero(z > 0)
    if idx.size == 0:
        return out.reshape(shape)

    pa, qa, za = p[idx], q[idx], z[idx]
    log_z = np.log(za)
    # term index after which the term ratio is strictly decreasing
    disc = pa * pa + qa - pa - pa * qa
    k_mono = np.where(disc > 0, np.sqrt(np.maximum(disc, 0.0)) - pa, 0.0)
    log_term = np.zeros(idx.size)
    log_sum = np.zeros(idx.size)
    log_tol = np.log(rtol)

    for k in range(max_terms):
        log_term = log_term + np.log(pa + k) + log_z - np.log(qa + k) - np.log(k + 1.0)
        log_sum = np.logaddexp(log_sum, log_term)
        r_next = (pa + k + 1) * za / ((qa + k + 1) * (k + 2.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            tail = log_term + np.log(r_next) - np.log1p(-r_next)
        done = (r_next < 1.0) & (k + 1.0 >= k_mono) & (tail - log_sum < log_tol)
        if done.any():
            out[idx[done]] = log_sum[done]
            keep = ~done
            idx, pa, qa, za, log_z = idx[keep], pa[keep], qa[keep], za[keep], log_z[keep]
            k_mono, log_term, log_sum = k_mono[keep], log_term[keep], log_sum[keep]
            if idx.size == 0:
                return out.reshape(shape)

    partial = out.copy()
    partial[idx] = log_sum
    raise ConvergenceError(
        f"Kummer series did not converge within {max_terms} terms", partial=partial.reshape(shape)
    )


def _log_chf_asymptotic(a, b, c):
    """Large-c expansion of ln M(a; b; -c).

    Returns (value, ok); entries with ok False were not resolved to full
    precision and must be evaluated another way.
    """
    total = np.ones(a.shape)
    term = np.ones(a.shape)
    prev = np.full(a.shape, np.inf)
    ok = np.zeros(a.shape, dtype=bool)
    failed = np.zeros(a.shape, dtype=bool)
    for s in range(1, _ASYMPTOTIC_TERMS + 1):
        term = term * (a + s - 1) * (a - b + s) / (s * c)
        total = total + term
        mag = np.abs(term)
        failed |= (~ok) & (mag > prev)
        ok |= (~failed) & (mag <= _ASYMPTOTIC_RTOL * np.abs(total))
        prev = mag
        if np.all(ok | failed):
            break
    ok &= total > 0
    log_main = sc.gammaln(b) - sc.gammaln(b - a) - a * np.log(c)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = log_main + np.log(np.where(ok, total, 1.0))
    # the exponentially small companion term must be negligible
    log_small = sc.gammaln(b) - sc.gammaln(a) - c + (a - b) * np.log(c)
    ok &= (log_small - value) < np.log(_ASYMPTOTIC_RTOL)
    return value, ok


def chf_1f1_log(a, b=None, c=None):
    """Natural log of the confluent hypergeometric function M(a; b; -c).

    Accepts either a :class:`ChfArgs` or three broadcastable arrays. Valid
    arguments satisfy a > 0, b >= a and c >= 0.

    For c <= 30 the Kummer transformation M(a; b; -c) = e^{-c} M(b-a; b; c)
    turns the series into one with positive terms. Larger c first tries the
    asymptotic expansion in 1/c and falls back to the same positive series.
    """
    if isinstance(a, ChfArgs):
        a, b, c = a.a, a.b, a.c
    a_arr, b_arr, c_arr = _as_float_array(a, b, c)
    _check_chf_domain(a_arr, b_arr, c_arr)
    shape = a_arr.shape
    a_arr, b_arr, c_arr = a_arr.ravel(), b_arr.ravel(), c_arr.ravel()
    out = np.empty(a_arr.shape)

    equal = b_arr == a_arr
    out[equal] = -c_arr[equal]
    use_series = (c_arr <= SERIES_MAX_C) & ~equal
    big = np.flatnonzero(~use_series & ~equal)
    if big.size:
        val, ok = _log_chf_asymptotic(a_arr[big], b_arr[big], c_arr[big])
        out[big[ok]] = val[ok]
        use_series[big[~ok]] = True

    sidx = np.flatnonzero(use_series)
    if sidx.size:
        a_s, b_s, c_s = a_arr[sidx], b_arr[sidx], c_arr[sidx]
        try:
            out[sidx] = -c_s + log_kummer_series(b_s - a_s, b_s, c_s)
        except ConvergenceError as exc:
            partial = out.copy()
            partial[sidx] = -c_s + exc.partial
            raise ConvergenceError(str(exc), partial=_maybe_scalar(partial.reshape(shape), shape)) from None
    return _maybe_scalar(out.reshape(shape), shape)
