"""Fit and calibration statistics for filtered and smoothed output."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import CountMatrix
from .errors import DomainError, UndefinedMetricError


def _grid(x):
    return x.values if isinstance(x, CountMatrix) else np.asarray(x)


def ape_terms(actual, fitted):
    """Absolute percentage errors of the cells with a positive count.

    Returns ``(terms, n_excluded)``; zero-count cells have no defined APE
    and are left out.
    """
    y = np.asarray(_grid(actual), dtype=float)
    f = np.asarray(fitted, dtype=float)
    if y.shape != f.shape:
        raise DomainError(f"shape mismatch: actual {y.shape} vs fitted {f.shape}")
    keep = y > 0
    return np.abs(y[keep] - f[keep]) / y[keep], int(np.sum(~keep))


def median_ape(actual, fitted) -> float:
    """Median over cells of |Y - fitted| / Y, zero counts excluded."""
    terms, _ = ape_terms(actual, fitted)
    if terms.size == 0:
        raise UndefinedMetricError("median APE is undefined: every count is zero")
    return float(np.median(terms))


def coverage(intervals, truth) -> float:
    """Fraction of cells whose truth lies in the closed interval.

    ``intervals`` has the (lo, hi) pair on its last axis and otherwise the
    shape of ``truth``.
    """
    iv = np.asarray(intervals, dtype=float)
    t = np.asarray(truth, dtype=float)
    if iv.shape != t.shape + (2,):
        raise DomainError(f"intervals of shape {iv.shape} do not match truth {t.shape}")
    lo, hi = iv[..., 0], iv[..., 1]
    if np.any(lo > hi):
        raise DomainError("interval lower bounds exceed upper bounds")
    if t.size == 0:
        raise UndefinedMetricError("coverage of an empty set")
    return float(np.mean((lo <= t) & (t <= hi)))


def pacf_lag1(series) -> float:
    """Lag-1 partial autocorrelation, i.e. the lag-1 sample autocorrelation."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise UndefinedMetricError("need a series of length >= 3")
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom <= 0.0 or not np.isfinite(denom):
        raise UndefinedMetricError("series has zero variance")
    return float(np.dot(x[:-1], x[1:]) / denom)


def pairwise_correlation(counts) -> np.ndarray:
    """J x J Pearson correlations of the series; NaN marks undefined entries.

    Rows with zero variance have every entry, including the diagonal, set
    to NaN.
    """
    y = np.asarray(_grid(counts), dtype=float)
    if y.ndim != 2 or y.shape[1] < 3:
        raise UndefinedMetricError("need a J x T grid with T >= 3")
    z = y - y.mean(axis=1, keepdims=True)
    sd = np.sqrt((z * z).sum(axis=1))
    ok = sd > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (z @ z.T) / np.outer(sd, sd)
    r = np.clip(r, -1.0, 1.0)
    r[~ok, :] = np.nan
    r[:, ~ok] = np.nan
    idx = np.flatnonzero(ok)
    r[idx, idx] = 1.0
    return r


@dataclass
class EvalReport:
    median_ape: float
    ape_excluded: int
    coverage_by_series: list
    pairwise_correlations: list
    pacf_lag1: Optional[float] = None
    lambda_coverage: Optional[list] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.median_ape >= 0:
            raise DomainError("median APE must be non-negative")
        if any(not 0.0 <= c <= 1.0 for c in self.coverage_by_series):
            raise DomainError("coverages must lie in [0, 1]")
        r = np.asarray(self.pairwise_correlations, dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1] or not np.allclose(r, r.T, equal_nan=True):
            raise DomainError("correlation grid must be square and symmetric")
        if self.pacf_lag1 is not None and not -1.0 <= self.pacf_lag1 <= 1.0:
            raise DomainError("PACF must lie in [-1, 1]")

    def to_dict(self):
        d = asdict(self)
        d["pairwise_correlations"] = [[None if np.isnan(v) else float(v) for v in row]
                                      for row in np.asarray(self.pairwise_correlations, dtype=float)]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["pairwise_correlations"] = [[np.nan if v is None else v for v in row] for row in d["pairwise_correlations"]]
        return cls(**d)


def evaluate(actual: CountMatrix, rate_mean, rate_intervals=None, theta_mean: Optional[Sequence[float]] = None,
             lambda_intervals=None, true_lambdas=None) -> EvalReport:
    """Assemble an :class:`EvalReport`.

    ``rate_mean`` is the J x T grid of fitted rates and ``rate_intervals``
    (J x T x 2) the matching credible bands; per-series coverage counts the
    observed counts that fall inside their band.
    """
    y = _grid(actual)
    terms, excluded = ape_terms(y, rate_mean)
    if terms.size == 0:
        raise UndefinedMetricError("median APE is undefined: every count is zero")
    if rate_intervals is None:
        cov = []
    else:
        iv = np.asarray(rate_intervals, dtype=float)
        cov = [coverage(iv[j], y[j]) for j in range(y.shape[0])]
    pacf = None if theta_mean is None else pacf_lag1(theta_mean)
    lam_cov = None
    if lambda_intervals is not None and true_lambdas is not None:
        iv = np.asarray(lambda_intervals, dtype=float)
        lam_cov = [coverage(iv[j], true_lambdas[j]) for j in range(iv.shape[0])]
    return EvalReport(
        median_ape=float(np.median(terms)),
        ape_excluded=excluded,
        coverage_by_series=cov,
        pairwise_correlations=pairwise_correlation(y).tolist(),
        pacf_lag1=pacf,
        lambda_coverage=lam_cov,
    )
