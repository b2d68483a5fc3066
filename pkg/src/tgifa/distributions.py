"""Truncated-distribution sampling primitives and Gaussian log-kernels.

Every multivariate truncated draw in the model reduces to independent
univariate ones (columns are conditionally independent given the factor
scores), so only univariate primitives are needed. Sampling is by inverse
CDF evaluated through log survival functions: exact in distribution, one
uniform per draw, and accurate arbitrarily deep in the tails.
"""
from __future__ import annotations

import numpy as np

from ._backend import get_kernels

_K, BACKEND = get_kernels()


class RngStream:
    """Seedable generator with deterministically derived substreams.

    ``substream(*key)`` returns an independent generator derived from the
    root seed and the integer key tuple; the same seed and key always
    reproduce the same draw sequence, regardless of creation order.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._seq = np.random.SeedSequence(self.seed)
        self.generator = np.random.default_rng(self._seq)

    def substream(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(key))
        )


def _validate_tnorm_args(sigma, lower, upper):
    sigma = np.asarray(sigma, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if np.any(~(sigma > 0) | ~np.isfinite(sigma)):
        raise ValueError("sigma must be positive and finite")
    if np.any(~(lower < upper)):
        raise ValueError("need lower < upper")
    return sigma, lower, upper


def sample_trunc_normal(mu, sigma, lower, upper, rng, size=None):
    """Draw from N(mu, sigma^2) truncated to (lower, upper).

    Bounds may be -inf/+inf. Arguments broadcast; ``size`` forces the output
    shape. Returns a float for all-scalar input, else an array. Draws lie
    strictly inside the interval.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(~np.isfinite(mu)):
        raise ValueError("mu must be finite")
    sigma, lower, upper = _validate_tnorm_args(sigma, lower, upper)
    shape = np.broadcast_shapes(mu.shape, sigma.shape, lower.shape, upper.shape)
    if size is not None:
        shape = np.broadcast_shapes(shape, tuple(np.atleast_1d(size)))
    u = rng.random(shape)
    x = _K.tnorm_transform(u, mu, sigma, lower, upper)
    if shape == () and size is None:
        return float(x)
    return x


def interval_prob(mu, sigma, trunc_lower, a, b):
    """Mass that N(mu, sigma^2) truncated below ``trunc_lower`` puts on [a, b].

    Requires trunc_lower <= a <= b; ``b`` may be +inf. Computed from log
    survival values so deep-tail masses keep relative precision.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    trunc_lower = np.asarray(trunc_lower, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any(~(sigma > 0)):
        raise ValueError("sigma must be positive")
    if np.any(trunc_lower > a) or np.any(a > b):
        raise ValueError("need trunc_lower <= a <= b")
    p = _K.tnorm_interval_prob(mu, sigma, trunc_lower, a, b)
    if p.shape == ():
        return float(p)
    return p


def log_gauss_kernel(y, mean, precisions) -> float:
    """Unnormalised Gaussian log-density: -0.5 * sum(prec * (y - mean)^2)."""
    y = np.asarray(y, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    precisions = np.asarray(precisions, dtype=np.float64)
    if not (y.shape == mean.shape == precisions.shape):
        raise ValueError(
            f"length mismatch: {y.shape}, {mean.shape}, {precisions.shape}"
        )
    if np.any(precisions <= 0):
        raise ValueError("precisions must be positive")
    d = y - mean
    return float(-0.5 * np.dot(precisions, d * d))


def sample_trunc_gamma_lb1(shape, rate, rng, size=None):
    """Draw from Gamma(shape, rate) conditioned on [1, inf).

    ``rate`` parameterisation (mean shape/rate before conditioning).
    Returns a float for scalar input, else an array.
    """
    shape_arr = np.asarray(shape, dtype=np.float64)
    rate_arr = np.asarray(rate, dtype=np.float64)
    if np.any(shape_arr <= 0) or np.any(rate_arr <= 0):
        raise ValueError("shape and rate must be positive")
    out_shape = np.broadcast_shapes(shape_arr.shape, rate_arr.shape)
    if size is not None:
        out_shape = np.broadcast_shapes(out_shape, tuple(np.atleast_1d(size)))
    u = rng.random(out_shape)
    x = _K.tgamma_lb1_transform(u, shape_arr, rate_arr)
    if out_shape == () and size is None:
        return float(x)
    return x
