"""NumPy implementations of the hot kernels.

These mirror ``_kernels.pyx`` one for one and are used whenever the compiled
extension is not importable.
"""
import numpy as np


def clog1p(z):
    """log(1 + z) for complex z, accurate when |z| is small."""
    z = np.asarray(z, dtype=complex)
    re, im = z.real, z.imag
    return 0.5 * np.log1p(2.0 * re + re * re + im * im) + 1j * np.arctan2(im, 1.0 + re)


def nig_cumulant(theta, alpha, beta, delta):
    theta = np.asarray(theta, dtype=float)
    g2 = (alpha - beta) * (alpha + beta)
    g = np.sqrt(g2)
    q = theta * (theta - 2j * beta)
    s = np.sqrt(g2 + q)
    return -delta * theta * (theta * g + 1j * beta * q / (g + s)) / (g * (g + s))


# Below this fraction of the convergence radius alpha - |beta| the cumulant
# series replaces the closed form, whose terms cancel to first order in x.
SERIES_RADIUS = 1e-3


def nig_cumulants(alpha, beta):
    """Cumulants kappa_2..kappa_7 of J(1) for delta = 1."""
    a2, b2 = alpha * alpha, beta * beta
    g2 = (alpha - beta) * (alpha + beta)
    g = np.sqrt(g2)
    return np.array([
        a2 / g**3,
        3 * a2 * beta / g**5,
        3 * a2 * (a2 + 4 * b2) / g**7,
        15 * a2 * beta * (3 * a2 + 4 * b2) / g**9,
        45 * a2 * (a2 * a2 + 12 * a2 * b2 + 8 * b2 * b2) / g**11,
        315 * a2 * beta * (5 * a2 * a2 + 20 * a2 * b2 + 8 * b2 * b2) / g**13,
    ])


def _psi1_series(xt, alpha1, beta1, mu, tau):
    k = np.arange(2, 8)
    # int_0^tau (x e^{mu s})^k ds = x^k expm1(k mu tau) / (k mu)
    coef = nig_cumulants(alpha1, beta1) * (1j ** k) * np.expm1(k * mu * tau) / (k * mu)
    coef /= np.array([2, 6, 24, 120, 720, 5040], dtype=float)
    return np.power.outer(xt, k) @ coef


def psi1_closed(v, alpha1, beta1, x_scale, growth, mu, tau):
    """Time-integrated cumulant of the exponentially weighted factor, v >= 0."""
    v = np.asarray(v, dtype=float)
    if x_scale == 0.0:
        return np.zeros(v.shape, dtype=complex)
    if mu == 0.0:
        return tau * nig_cumulant(v * x_scale, alpha1, beta1, 1.0)
    small = v * x_scale * (1.0 + growth) < SERIES_RADIUS * (alpha1 - abs(beta1))
    if small.any():
        out = np.empty(v.shape, dtype=complex)
        out[small] = _psi1_series(v[small] * x_scale, alpha1, beta1, mu, tau)
        if (~small).any():
            out[~small] = psi1_closed(v[~small], alpha1, beta1, x_scale, growth, mu, tau)
        return out
    b = beta1
    g2 = (alpha1 - b) * (alpha1 + b)
    g = np.sqrt(g2)
    xt = v * x_scale
    dx = xt * growth
    xT = xt + dx
    St = np.sqrt(g2 + xt * (xt - 2j * b))
    ST = np.sqrt(g2 + xT * (xT - 2j * b))
    dS = dx * (xT + xt - 2j * b) / (ST + St)
    d_asinh = clog1p((dx + dS) / (xt - 1j * b + St))
    Nt = g2 - 1j * b * xt + g * St
    d_logN = clog1p((-1j * b * dx + g * dS) / Nt)
    return (-dS + 1j * b * d_asinh + g * d_logN - 1j * (b / g) * dx) / mu


def two_factor_log_cf(v, alpha1, beta1, alpha2, beta2, x_scale, growth, mu, tau, gamma2):
    v = np.asarray(v, dtype=float)
    out = psi1_closed(v, alpha1, beta1, x_scale, growth, mu, tau)
    if gamma2 != 0.0:
        out = out + tau * nig_cumulant(v * gamma2, alpha2, beta2, 1.0)
    return out


def mt_time_values(v, weights, logpsi, forward, strikes, half_var):
    """(1/pi) sum_j w_j Re(exp(i (F - K) v_j) xi(v_j)) for every strike K."""
    v = np.asarray(v, dtype=float)
    weights = np.asarray(weights, dtype=float)
    logpsi = np.asarray(logpsi, dtype=complex)
    strikes = np.asarray(strikes, dtype=float)
    pos = v > 0.0
    xi = np.empty(v.shape, dtype=complex)
    xi[pos] = -np.expm1(logpsi[pos]) / (v[pos] * v[pos])
    xi[~pos] = half_var
    phase = np.outer(forward - strikes, v)
    wr = weights * xi.real
    wi = weights * xi.imag
    return (np.cos(phase) @ wr - np.sin(phase) @ wi) / np.pi
