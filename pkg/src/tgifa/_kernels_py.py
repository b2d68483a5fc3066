"""Pure-NumPy implementations of the hot kernels.

Twin of the compiled extension ``tgifa._kernels``: same signatures, same
formulas, agreeing to floating-point rounding. Kernels are deterministic
transforms; any randomness (the ``u`` arrays) is drawn by the caller, so
both backends consume an identical stream.

All inputs are float64 arrays of matching shape unless noted.
"""
import numpy as np
from scipy.special import gammaincc, gammainccinv, log_ndtr, ndtri_exp

# Uniform draws of exactly 0 would map to the open interval's endpoint;
# flooring keeps every transform finite without measurable bias.
_U_FLOOR = 1e-300


def tnorm_transform(u, mean, sd, lower, upper):
    """Inverse-CDF draw from N(mean, sd^2) truncated to (lower, upper).

    Computed through log survival values, which keeps full precision even
    when the interval sits many standard deviations into a tail.
    """
    u = np.maximum(u, _U_FLOOR)
    a = (lower - mean) / sd
    b = (upper - mean) / sd
    la = log_ndtr(-a)
    lb = log_ndtr(-b)
    x = mean - sd * ndtri_exp(la + np.log1p(u * np.expm1(lb - la)))
    lo_open = np.where(np.isfinite(lower), np.nextafter(lower, np.inf), lower)
    hi_open = np.where(np.isfinite(upper), np.nextafter(upper, -np.inf), upper)
    return np.clip(x, lo_open, hi_open)


def tgamma_lb1_transform(u, shape, rate):
    """Inverse-CDF draw from Gamma(shape, rate) conditioned on [1, inf)."""
    u = np.maximum(np.asarray(u, dtype=np.float64), _U_FLOOR)
    shape = np.broadcast_to(np.asarray(shape, dtype=np.float64), u.shape)
    rate = np.broadcast_to(np.asarray(rate, dtype=np.float64), u.shape)
    q1 = gammaincc(shape, rate)
    with np.errstate(invalid="ignore"):
        x = gammainccinv(shape, u * q1) / rate
    # Mass above 1 too small for double precision: locally exponential tail.
    deep = q1 < 1e-290
    if np.any(deep):
        r_eff = np.maximum(rate - shape + 1.0, 1e-12)
        x = np.where(deep, 1.0 - np.log1p(-u) / r_eff, x)
    return np.maximum(x, 1.0)


def tnorm_interval_prob(mean, sd, t_lower, a, b):
    """Mass on [a, b] of N(mean, sd^2) truncated below ``t_lower``.

    Requires t_lower <= a <= b (b may be +inf).
    """
    sa = (a - mean) / sd
    sb = (b - mean) / sd
    st = (t_lower - mean) / sd
    la = log_ndtr(-sa)
    lb = log_ndtr(-sb)
    lt = log_ndtr(-st)
    p = np.exp(la - lt) * -np.expm1(lb - la)
    return np.clip(p, 0.0, 1.0)


def col_sq_resid(y, f, mu):
    """Per-column sum over rows of (y - f - mu)^2.

    y, f: (n, p); mu: (p,). Returns (p,).
    """
    d = y - f - mu
    return np.einsum("ij,ij->j", d, d)


def row_sq_resid(y, f, mu, prec):
    """Per-row precision-weighted squared residual sum.

    Returns (n,) with entry i equal to sum_j prec[j] * (y[i,j]-f[i,j]-mu[j])^2.
    """
    d = y - f - mu
    return np.einsum("ij,ij,j->i", d, d, prec)
