"""Counter-based random streams keyed by (seed, step, purpose, index).

Every random number used by the particle filter is a pure function of its
key and a draw counter, so results do not depend on evaluation order,
vectorisation or worker count. The mixing function is the SplitMix64
finaliser applied to a Weyl-sequence counter.

Variates are produced by inversion where possible so that one variate
consumes a fixed number of uniforms.
"""

from __future__ import annotations

import numpy as np
from scipy import special as sc

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TWO53 = float(2**53)

# stream purposes; fixed values keep checkpoints valid across releases
GAMMA_PICK = 1
RESAMPLE = 2
PROPAGATE = 3
SIS_RESAMPLE = 4
LAMBDA = 5
INIT_THETA = 6
INIT_LAMBDA = 7
GIBBS_THETA = 8
GIBBS_LAMBDA = 9


def _mix(x):
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


def _u64(value):
    return np.asarray(value, dtype=np.int64).astype(np.uint64)


class KeyedStream:
    """Uniform random numbers addressed by key instead of by sequence position."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        with np.errstate(over="ignore"):
            self._root = _mix(np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)

    def _key(self, step, purpose, index):
        with np.errstate(over="ignore"):
            k = _mix(self._root ^ (_u64(step) * _GOLDEN))
            k = _mix(k ^ (np.uint64(purpose) + _GOLDEN))
            return _mix(k ^ (_u64(index) * _M1 + _GOLDEN))

    def uniforms(self, step, purpose, index, n, offset=0):
        """Uniforms in the open interval (0, 1), shape ``(len(index), n)``.

        Column ``j`` is draw number ``offset + j`` of each keyed stream;
        ``offset`` may be an array with one entry per index.
        """
        index = np.atleast_1d(np.asarray(index))
        key = self._key(step, purpose, index)[:, None]
        offset = np.broadcast_to(_u64(offset), index.shape)[:, None]
        ctr = offset + (np.arange(n, dtype=np.uint64) + np.uint64(1))[None, :]
        with np.errstate(over="ignore"):
            bits = _mix(key + ctr * _GOLDEN)
        return ((bits >> _S11).astype(np.float64) + 0.5) / _TWO53

    def uniform(self, step, purpose, index=0):
        """A single uniform for a scalar key."""
        return float(self.uniforms(step, purpose, [index], 1)[0, 0])


def log_gamma_variates(shape, u1, u2):
    """ln of Gamma(shape, 1) draws by inversion.

    Shapes below one use X = Y * U^(1/shape) with Y ~ Gamma(shape + 1), which
    keeps tiny draws representable on the log scale.
    """
    shape = np.asarray(shape, dtype=float)
    small = shape < 1.0
    base = np.where(small, shape + 1.0, shape)
    y = sc.gammaincinv(base, u1)
    with np.errstate(divide="ignore"):
        out = np.log(y)
    return np.where(small, out + np.log(u2) / np.where(small, shape, 1.0), out)


def gamma_variates(shape, rate, u1, u2):
    """Gamma(shape, rate) draws (rate parameterisation) from two uniform arrays."""
    return np.exp(log_gamma_variates(shape, u1, u2)) / np.asarray(rate, dtype=float)


def beta_variates(p, q, u):
    """Beta(p, q) draws from a uniform array with four columns on its last axis."""
    lx = log_gamma_variates(p, u[..., 0], u[..., 1])
    ly = log_gamma_variates(q, u[..., 2], u[..., 3])
    return np.exp(lx - np.logaddexp(lx, ly))
