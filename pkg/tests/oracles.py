"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical kernels: the CHF oracle is
a direct extended-precision Kummer series, densities are integrated by
adaptive quadrature from their defining formulas.
"""

import math

import mpmath as mp
import numpy as np
from scipy import integrate, stats


def kummer_series_log(a, b, c, dps=None):
    """ln M(a; b; -c) from the raw alternating series in extended precision."""
    # terms peak near e^c while the sum can be as small as e^-c: carry enough
    # digits to absorb a cancellation of up to 2c / ln 10 decimal places
    digits = dps or int(40 + 2.2 * c / math.log(10))
    with mp.workdps(digits):
        a, b, z = mp.mpf(a), mp.mpf(b), -mp.mpf(c)
        term = mp.mpf(1)
        total = mp.mpf(1)
        k = 0
        tiny = mp.mpf(10) ** (-(digits - 5))
        while True:
            term *= (a + k) / (b + k) * z / (k + 1)
            total += term
            k += 1
            if k > a + abs(z) and abs(term) < tiny * abs(total):
                break
        return float(mp.log(total))


def transition_pdf(theta_next, theta_prev, alpha_prev, gamma):
    """Scaled-beta transition density written directly from its definition."""
    upper = theta_prev / gamma
    if not 0 < theta_next < upper:
        return 0.0
    u = theta_next / upper
    return stats.beta.pdf(u, gamma * alpha_prev, (1 - gamma) * alpha_prev) / upper


def predictive_by_quadrature(y, theta, lambdas, gamma, alpha):
    """ln of the integral of prod_j Pois(y_j; lambda_j x) against the transition.

    Uses the unit-interval substitution x = (theta/gamma) u and the
    algebraic-weight (QAWS) rule for the u^(p-1) (1-u)^(q-1) endpoint
    behaviour of the Beta factor.
    """
    y = np.asarray(y)
    lam = np.asarray(lambdas, dtype=float)
    upper = theta / gamma
    p, q = gamma * alpha, (1 - gamma) * alpha
    S, L = int(y.sum()), float(lam.sum())
    log_const = (
        float(np.sum(y * np.log(lam)) - sum(math.lgamma(v + 1) for v in y))
        + S * math.log(upper)
        - (math.lgamma(p) + math.lgamma(q) - math.lgamma(p + q))
    )
    # remaining integrand on (0, 1): u^(S+p-1) (1-u)^(q-1) e^{-L upper u}
    val, _ = integrate.quad(lambda u: math.exp(-L * upper * u), 0.0, 1.0, weight="alg",
                            wvar=(S + p - 1.0, q - 1.0), epsabs=0.0, epsrel=1e-12, limit=200)
    return log_const + math.log(val)


def hgb_norm_by_quadrature(a, b, c, upper):
    """ln of the HGB normaliser by high-precision quadrature on the unit interval."""
    with mp.workdps(30):
        a, b, k = mp.mpf(a), mp.mpf(b), mp.mpf(c) * upper
        f = lambda u: u ** (a - 1) * (1 - u) ** (b - 1) * mp.exp(-k * u)  # noqa: E731
        # split around the kernel's bulk so peaked integrands are resolved
        n = a + b - 2 + k
        mode = min(max((a - 1) / n, 0), 1) if n > 0 else mp.mpf("0.5")
        sd = mp.sqrt((mode * (1 - mode) + 1 / n) / n) if n > 0 else mp.mpf("0.5")
        pts = sorted({mp.mpf(0), mp.mpf(1)} | {min(max(mode + j * sd, 0), 1) for j in range(-12, 13)})
        val = mp.quad(f, pts)
        return float(a * math.log(upper) + mp.log(val))


def hgb_bin_probabilities(a, b, c, upper, edges):
    """Probability of each bin of a normalised HGB law, by quadrature of the kernel."""
    z = math.exp(hgb_norm_by_quadrature(a, b, c, upper))
    kern = lambda x: x ** (a - 1) * (1 - x / upper) ** (b - 1) * math.exp(-c * x)  # noqa: E731
    probs = np.array([integrate.quad(kern, lo, hi, limit=200, epsabs=0.0, epsrel=1e-10)[0]
                      for lo, hi in zip(edges[:-2], edges[1:-1])]) / z
    return np.append(probs, 1.0 - probs.sum())
