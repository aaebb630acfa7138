# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log1p, atan2, cos, sin, expm1, exp, fabs, copysign, M_PI

cnp.import_array()

cdef extern from "complex.h" nogil:
    double creal(double complex)
    double cimag(double complex)

# Fraction of the radius alpha - |beta| below which psi1 uses the cumulant series.
DEF SERIES_RADIUS = 1e-3
# Strikes are re-anchored with an exact sin/cos every this many rotation steps.
DEF REANCHOR = 16


cdef inline double complex _csqrt(double complex z) noexcept nogil:
    # Principal square root; the libm routine guards against overflow that
    # cannot occur for the arguments used here and is several times slower.
    cdef double a = creal(z), b = cimag(z)
    cdef double r = sqrt(a * a + b * b)
    cdef double t
    if r == 0.0:
        return 0.0
    if a >= 0.0:
        t = sqrt(0.5 * (r + a))
        return t + 1j * (0.5 * b / t)
    t = sqrt(0.5 * (r - a))
    return 0.5 * fabs(b) / t + 1j * copysign(t, b)


cdef inline double complex _clog1p(double complex z) noexcept nogil:
    cdef double re = creal(z), im = cimag(z)
    return 0.5 * log1p(2.0 * re + re * re + im * im) + 1j * atan2(im, 1.0 + re)


cdef inline double complex _nig(double th, double beta, double g, double g2, double delta) noexcept nogil:
    cdef double complex q = th * (th - 2j * beta)
    cdef double complex s = _csqrt(g2 + q)
    return -delta * th * (th * g + 1j * beta * q / (g + s)) / (g * (g + s))


def nig_cumulant(double[::1] theta, double alpha, double beta, double delta):
    cdef Py_ssize_t n = theta.shape[0], i
    cdef double g2 = (alpha - beta) * (alpha + beta)
    cdef double g = sqrt(g2)
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _nig(theta[i], beta, g, g2, delta)
    return out


cdef inline double complex _psi1(double v, double b, double g, double g2, double x_scale,
                                 double growth, double mu) noexcept nogil:
    cdef double xt = v * x_scale
    cdef double dx = xt * growth
    cdef double xT = xt + dx
    cdef double complex St = _csqrt(g2 + xt * (xt - 2j * b))
    cdef double complex ST = _csqrt(g2 + xT * (xT - 2j * b))
    cdef double complex dS = dx * (xT + xt - 2j * b) / (ST + St)
    cdef double complex d_asinh = _clog1p((dx + dS) / (xt - 1j * b + St))
    cdef double complex Nt = g2 - 1j * b * xt + g * St
    cdef double complex d_logN = _clog1p((-1j * b * dx + g * dS) / Nt)
    return (-dS + 1j * b * d_asinh + g * d_logN - 1j * (b / g) * dx) / mu


cdef inline double complex _psi1_series(double xt, double* coef) noexcept nogil:
    # sum_k coef[k] (i x)^k, k = 2..7, by Horner in i x
    cdef double complex ix = 1j * xt
    cdef double complex acc = coef[5]
    cdef int k
    for k in range(4, -1, -1):
        acc = acc * ix + coef[k]
    return acc * ix * ix


cdef void _series_coef(double a, double b, double mu, double tau, double* coef) noexcept nogil:
    cdef double a2 = a * a, b2 = b * b
    cdef double g = sqrt((a - b) * (a + b))
    cdef double kap[6]
    cdef double fact[6]
    cdef int k
    kap[0] = a2 / (g * g * g)
    kap[1] = 3 * a2 * b / g ** 5
    kap[2] = 3 * a2 * (a2 + 4 * b2) / g ** 7
    kap[3] = 15 * a2 * b * (3 * a2 + 4 * b2) / g ** 9
    kap[4] = 45 * a2 * (a2 * a2 + 12 * a2 * b2 + 8 * b2 * b2) / g ** 11
    kap[5] = 315 * a2 * b * (5 * a2 * a2 + 20 * a2 * b2 + 8 * b2 * b2) / g ** 13
    fact[0] = 2; fact[1] = 6; fact[2] = 24; fact[3] = 120; fact[4] = 720; fact[5] = 5040
    for k in range(6):
        coef[k] = kap[k] * expm1((k + 2) * mu * tau) / ((k + 2) * mu) / fact[k]


cdef inline double complex _psi1_any(double v, double b, double g, double g2, double x_scale,
                                     double growth, double mu, double limit,
                                     double* coef) noexcept nogil:
    if v * x_scale * (1.0 + growth) < limit:
        return _psi1_series(v * x_scale, coef)
    return _psi1(v, b, g, g2, x_scale, growth, mu)


def psi1_closed(double[::1] v, double alpha1, double beta1, double x_scale,
                double growth, double mu, double tau):
    cdef Py_ssize_t n = v.shape[0], i
    cdef double g2 = (alpha1 - beta1) * (alpha1 + beta1)
    cdef double g = sqrt(g2)
    cdef double coef[6]
    cdef double limit = SERIES_RADIUS * (alpha1 - fabs(beta1))
    out = np.zeros(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    if x_scale == 0.0:
        return out
    if mu != 0.0:
        _series_coef(alpha1, beta1, mu, tau, coef)
    with nogil:
        for i in range(n):
            if mu == 0.0:
                o[i] = tau * _nig(v[i] * x_scale, beta1, g, g2, 1.0)
            else:
                o[i] = _psi1_any(v[i], beta1, g, g2, x_scale, growth, mu, limit, coef)
    return out


def two_factor_log_cf(double[::1] v, double alpha1, double beta1, double alpha2,
                      double beta2, double x_scale, double growth, double mu,
                      double tau, double gamma2):
    cdef Py_ssize_t n = v.shape[0], i
    cdef double g12 = (alpha1 - beta1) * (alpha1 + beta1)
    cdef double g1 = sqrt(g12)
    cdef double g22 = (alpha2 - beta2) * (alpha2 + beta2)
    cdef double g2 = sqrt(g22)
    cdef double complex acc
    cdef double coef[6]
    cdef double limit = SERIES_RADIUS * (alpha1 - fabs(beta1))
    out = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] o = out
    if mu != 0.0 and x_scale != 0.0:
        _series_coef(alpha1, beta1, mu, tau, coef)
    with nogil:
        for i in range(n):
            acc = 0.0
            if x_scale != 0.0:
                if mu == 0.0:
                    acc = tau * _nig(v[i] * x_scale, beta1, g1, g12, 1.0)
                else:
                    acc = _psi1_any(v[i], beta1, g1, g12, x_scale, growth, mu, limit, coef)
            if gamma2 != 0.0:
                acc = acc + tau * _nig(v[i] * gamma2, beta2, g2, g22, 1.0)
            o[i] = acc
    return out


def mt_time_values(double[::1] v, double[::1] weights, double complex[::1] logpsi,
                   double forward, double[::1] strikes, double half_var):
    cdef Py_ssize_t n = v.shape[0], m = strikes.shape[0], i, k
    cdef double complex z
    cdef double xr, xi_im, em, vi, wr, wi, c0, cr, sr, tmp
    cdef double c = 1.0, s = 0.0
    cdef double step = strikes[1] - strikes[0] if m > 1 else 0.0
    cdef bint uniform = m > 2
    for k in range(2, m):
        if fabs(strikes[k] - strikes[k - 1] - step) > 1e-12 * fabs(step):
            uniform = False
            break
    out = np.zeros(m)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            vi = v[i]
            if vi > 0.0:
                z = logpsi[i]
                # -expm1(z) for complex z, keeping precision when z is tiny
                em = expm1(creal(z))
                xr = -(em * cos(cimag(z)) - 2.0 * sin(0.5 * cimag(z)) ** 2)
                xi_im = -(exp(creal(z)) * sin(cimag(z)))
                wr = weights[i] * xr / (vi * vi)
                wi = weights[i] * xi_im / (vi * vi)
            else:
                wr = weights[i] * half_var
                wi = 0.0
            if uniform:
                # exp(i (F - K_k) v) advanced by the fixed rotation exp(-i step v)
                cr = cos(step * vi)
                sr = -sin(step * vi)
                for k in range(m):
                    if k % REANCHOR == 0:
                        c = cos((forward - strikes[k]) * vi)
                        s = sin((forward - strikes[k]) * vi)
                    else:
                        tmp = c * cr - s * sr
                        s = c * sr + s * cr
                        c = tmp
                    o[k] += c * wr - s * wi
            else:
                for k in range(m):
                    c0 = (forward - strikes[k]) * vi
                    o[k] += cos(c0) * wr - sin(c0) * wi
        for k in range(m):
            o[k] /= M_PI
    return out
