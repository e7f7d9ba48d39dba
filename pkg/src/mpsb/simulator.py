"""Data-generating process: scaled-beta environment driving J Poisson series."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import CountMatrix
from .errors import DomainError


@dataclass(frozen=True)
class SimulationTrace:
    theta0: float
    thetas: np.ndarray
    innovations: np.ndarray
    counts: CountMatrix
    # alphas[t] is the alpha entering the innovation law at step t + 1
    alphas: np.ndarray
    config_echo: dict = field(default_factory=dict)

    @property
    def T(self):
        return len(self.thetas)


def simulate(true_lambdas: Sequence[float], gamma: float, alpha0: float, beta0: float, T: int, seed: int = 0) -> SimulationTrace:
    """Simulate T steps of the model.

    theta_0 ~ Gamma(alpha0, beta0); then for each t the innovation is
    Beta(gamma*alpha_{t-1}, (1-gamma)*alpha_{t-1}), theta_t = theta_{t-1}/gamma * eps_t,
    Y_jt ~ Pois(lambda_j theta_t) and alpha_t = gamma*alpha_{t-1} + sum_j Y_jt.
    The alpha recursion uses the counts just generated, so no lambda enters it.
    """
    lam = np.asarray(true_lambdas, dtype=float)
    if lam.ndim != 1 or lam.size < 1 or np.any(lam <= 0):
        raise DomainError("true_lambdas must be a non-empty vector of positive rates")
    if not 0.0 < gamma < 1.0:
        raise DomainError("gamma must lie in (0, 1)")
    if not (alpha0 > 0 and beta0 > 0):
        raise DomainError("alpha0 and beta0 must be positive")
    if int(T) != T or T < 1:
        raise DomainError("T must be a positive integer")
    T = int(T)
    rng = np.random.default_rng(seed)
    J = lam.size

    theta_prev = float(rng.gamma(alpha0, 1.0 / beta0))
    theta0 = theta_prev
    alpha = float(alpha0)
    thetas = np.empty(T)
    eps = np.empty(T)
    alphas = np.empty(T)
    counts = np.empty((J, T), dtype=np.int64)
    for t in range(T):
        alphas[t] = alpha
        if not gamma * alpha > 0:
            raise DomainError(f"environment collapsed: alpha underflowed to zero at step {t + 1}")
        e = rng.beta(gamma * alpha, (1.0 - gamma) * alpha)
        theta = theta_prev / gamma * e
        y = rng.poisson(lam * theta)
        eps[t], thetas[t], counts[:, t] = e, theta, y
        alpha = gamma * alpha + int(y.sum())
        theta_prev = theta

    echo = {
        "true_lambdas": lam.tolist(),
        "gamma": float(gamma),
        "alpha0": float(alpha0),
        "beta0": float(beta0),
        "T": T,
        "seed": int(seed),
        "alpha_recursion": "true-counts",
    }
    return SimulationTrace(theta0, thetas, eps, CountMatrix(counts), alphas, echo)


def replay_check(trace: SimulationTrace) -> bool:
    """Recompute the theta and alpha identities of a trace exactly."""
    gamma = trace.config_echo["gamma"]
    prev = trace.theta0
    for t in range(trace.T):
        if trace.thetas[t] != prev / gamma * trace.innovations[t]:
            return False
        prev = trace.thetas[t]
    if trace.alphas[0] != trace.config_echo["alpha0"]:
        return False
    totals = trace.counts.values.sum(axis=0)
    for t in range(1, trace.T):
        if trace.alphas[t] != gamma * trace.alphas[t - 1] + int(totals[t - 1]):
            return False
    return True


def perturbed(trace: SimulationTrace, what: str, t: int, delta: float) -> SimulationTrace:
    """Copy of ``trace`` with one theta or alpha entry shifted (for diagnostics)."""
    arr = np.array(getattr(trace, what), dtype=float)
    arr[t] += delta
    return replace(trace, **{what: arr})
