# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Twin of ``tgifa._kernels_py``: same signatures and formulas, fused into
single passes over the arrays. Kernels consume no randomness; callers draw
the ``u`` arrays, so both backends see an identical stream.
"""
import numpy as np

from libc.math cimport INFINITY, exp, expm1, isfinite, log1p, nextafter

from scipy.special.cython_special cimport (
    gammaincc,
    gammainccinv,
    log_ndtr,
    ndtri_exp,
)

cdef double _U_FLOOR = 1e-300


cdef inline double _tnorm1(double u, double m, double s, double lo, double hi) noexcept:
    cdef double a = (lo - m) / s
    cdef double b = (hi - m) / s
    cdef double la = log_ndtr(-a)
    cdef double lb = log_ndtr(-b)
    cdef double x, edge
    if u < _U_FLOOR:
        u = _U_FLOOR
    x = m - s * ndtri_exp(la + log1p(u * expm1(lb - la)))
    if isfinite(lo):
        edge = nextafter(lo, INFINITY)
        if x < edge:
            x = edge
    if isfinite(hi):
        edge = nextafter(hi, -INFINITY)
        if x > edge:
            x = edge
    return x


cdef inline double _tgamma1(double u, double shape, double rate) noexcept:
    cdef double q1 = gammaincc(shape, rate)
    cdef double x, r_eff
    if u < _U_FLOOR:
        u = _U_FLOOR
    if q1 < 1e-290:
        r_eff = rate - shape + 1.0
        if r_eff < 1e-12:
            r_eff = 1e-12
        x = 1.0 - log1p(-u) / r_eff
    else:
        x = gammainccinv(shape, u * q1) / rate
    if x < 1.0:
        x = 1.0
    return x


cdef inline double _interval1(double m, double s, double t, double a, double b) noexcept:
    cdef double la = log_ndtr(-(a - m) / s)
    cdef double lb = log_ndtr(-(b - m) / s)
    cdef double lt = log_ndtr(-(t - m) / s)
    cdef double p = exp(la - lt) * -expm1(lb - la)
    if p < 0.0:
        p = 0.0
    elif p > 1.0:
        p = 1.0
    return p


cdef _as_flat(args):
    arrs = np.broadcast_arrays(*[np.asarray(a, dtype=np.float64) for a in args])
    shape = arrs[0].shape
    flat = [np.ascontiguousarray(a).ravel() for a in arrs]
    return shape, flat


def tnorm_transform(u, mean, sd, lower, upper):
    """Inverse-CDF draw from N(mean, sd^2) truncated to (lower, upper)."""
    shape, (uf, mf, sf, lf, hf) = _as_flat((u, mean, sd, lower, upper))
    cdef double[::1] uv = uf, mv = mf, sv = sf, lv = lf, hv = hf
    cdef Py_ssize_t i, n = uv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    for i in range(n):
        ov[i] = _tnorm1(uv[i], mv[i], sv[i], lv[i], hv[i])
    return out.reshape(shape)


def tgamma_lb1_transform(u, shape, rate):
    """Inverse-CDF draw from Gamma(shape, rate) conditioned on [1, inf)."""
    outshape, (uf, af, rf) = _as_flat((u, shape, rate))
    cdef double[::1] uv = uf, av = af, rv = rf
    cdef Py_ssize_t i, n = uv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    for i in range(n):
        ov[i] = _tgamma1(uv[i], av[i], rv[i])
    return out.reshape(outshape)


def tnorm_interval_prob(mean, sd, t_lower, a, b):
    """Mass on [a, b] of N(mean, sd^2) truncated below ``t_lower``."""
    shape, (mf, sf, tf, af, bf) = _as_flat((mean, sd, t_lower, a, b))
    cdef double[::1] mv = mf, sv = sf, tv = tf, av = af, bv = bf
    cdef Py_ssize_t i, n = mv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    for i in range(n):
        ov[i] = _interval1(mv[i], sv[i], tv[i], av[i], bv[i])
    return out.reshape(shape)


def col_sq_resid(y, f, mu):
    """Per-column sum over rows of (y - f - mu)^2."""
    cdef double[:, ::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef Py_ssize_t i, j, n = yv.shape[0], p = yv.shape[1]
    out = np.zeros(p, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double d
    for i in range(n):
        for j in range(p):
            d = yv[i, j] - fv[i, j] - mv[j]
            ov[j] += d * d
    return out


def row_sq_resid(y, f, mu, prec):
    """Per-row precision-weighted squared residual sum."""
    cdef double[:, ::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(prec, dtype=np.float64)
    cdef Py_ssize_t i, j, n = yv.shape[0], p = yv.shape[1]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double d, acc
    for i in range(n):
        acc = 0.0
        for j in range(p):
            d = yv[i, j] - fv[i, j] - mv[j]
            acc += pv[j] * d * d
        ov[i] = acc
    return out
