"""European call prices by Fourier inversion of the modified time value.

With Z = F(T) - F(t) centered and square integrable, the time value
z(K) = C(K) - (F(t) - K)^+ has transform

    xi(v) = exp(i v F(t)) (1 - Psi(v)) / v^2

and z(K) = (1/pi) int_0^inf Re(exp(-i K v) xi(v)) dv.  The integral is
truncated at A; beyond A the ``1`` part of the integrand is added in closed
form (cosine/sine integrals), and A is doubled until |Psi(A)| is negligible.
Rates are zero throughout, so no discounting appears.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, sici

from . import kernels

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class PricingGrid:
    A: float = 10.0
    quad_mode: str = "adaptive_simpson"
    N: int = 4096
    abs_tol: float = 1e-8
    cf_tol: float = 1e-14
    max_doublings: int = 16
    max_evals: int = 2_000_000

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")
        if self.N < 16:
            raise ValueError("N must be at least 16")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.quad_mode not in ("adaptive_simpson", "euler_sum"):
            raise ValueError(f"unknown quad_mode {self.quad_mode!r}")


DEFAULT_GRID = PricingGrid()


def _log_cf(cf, v):
    if hasattr(cf, "log_cf"):
        return cf.log_cf(v)
    return np.log(cf(v))


def _variance(cf) -> float:
    var = getattr(cf, "variance", None)
    if var is not None:
        return float(var)
    h = 1e-4
    return float(-2.0 * np.real(_log_cf(cf, np.array([h]))[0]) / (h * h))


def xi_mt(v, F_t: float, cf, variance: float | None = None):
    """Fourier transform of the modified time value; v = 0 uses Var(Z)/2."""
    v = np.asarray(v, dtype=float)
    flat = np.atleast_1d(v).ravel()
    pos = flat != 0.0
    out = np.empty(flat.shape, dtype=complex)
    if pos.any():
        vp = flat[pos]
        out[pos] = np.exp(1j * vp * F_t) * (-np.expm1(_log_cf(cf, vp))) / (vp * vp)
    if (~pos).any():
        out[~pos] = 0.5 * (_variance(cf) if variance is None else variance)
    return complex(out[0]) if v.ndim == 0 else out.reshape(v.shape)


def _tail(b, A):
    """(1/pi) int_A^inf cos(b v) / v^2 dv."""
    ab = np.abs(b)
    si, _ = sici(ab * A)
    return (np.cos(b * A) / A - ab * (0.5 * np.pi - si)) / np.pi


def _euler_end_correction(b, A, h):
    """Leading Euler-Maclaurin term of the trapezoid sum on [0, A].

    Beyond the bound the characteristic function is negligible, so the
    integrand there is cos(b v) / (pi v^2) with a known derivative; its
    derivative at v = 0 vanishes for the real part taken here.
    """
    slope = -(b * np.sin(b * A) / A ** 2 + 2.0 * np.cos(b * A) / A ** 3) / np.pi
    return -h * h / 12.0 * slope


def _effective_bound(cf, grid: PricingGrid) -> float:
    A = grid.A
    for _ in range(grid.max_doublings):
        if abs(np.exp(_log_cf(cf, np.array([A]))[0])) <= grid.cf_tol:
            return A
        A *= 2.0
    raise QuadratureError(f"characteristic function still above {grid.cf_tol:g} at v={A:g}")


def _integrand(v, b, cf, half_var):
    """(1/pi) Re(exp(i b v) xi) on an (strikes x nodes) grid, b = F - K."""
    pos = v > 0
    xi = np.empty(v.shape, dtype=complex)
    vp = v[pos]
    xi[pos] = -np.expm1(_log_cf(cf, vp)) / (vp * vp)
    xi[~pos] = half_var
    ph = np.outer(b, v)
    return (np.cos(ph) * xi.real - np.sin(ph) * xi.imag) / np.pi


def _adaptive_simpson(f, a, c, tol, n_init, max_evals, max_levels=50):
    """Breadth-first adaptive Simpson for a vector-valued integrand.

    ``f`` maps nodes (n,) to values (m, n).  Each interval is accepted when
    the largest component error estimate falls below 15 * tol * width / (c - a).
    """
    edges = np.linspace(a, c, n_init + 1)
    lo, hi = edges[:-1], edges[1:]
    mid = 0.5 * (lo + hi)
    fe = f(edges)
    fm = f(mid)
    flo, fhi = fe[:, :-1], fe[:, 1:]
    whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi)
    total = np.zeros(fe.shape[0])
    evals = edges.size + mid.size
    span = c - a
    for _ in range(max_levels):
        ml = 0.5 * (lo + mid)
        mr = 0.5 * (mid + hi)
        k = lo.size
        fnew = f(np.concatenate([ml, mr]))
        evals += 2 * k
        fml, fmr = fnew[:, :k], fnew[:, k:]
        h = hi - lo
        left = h / 12.0 * (flo + 4.0 * fml + fm)
        right = h / 12.0 * (fm + 4.0 * fmr + fhi)
        err = left + right - whole
        ok = np.max(np.abs(err), axis=0) <= 15.0 * tol * h / span
        total += np.sum((left + right + err / 15.0)[:, ok], axis=1)
        bad = ~ok
        if not bad.any():
            return total, evals
        if evals > max_evals:
            break
        lo = np.concatenate([lo[bad], mid[bad]])
        hi = np.concatenate([mid[bad], hi[bad]])
        flo = np.concatenate([flo[:, bad], fm[:, bad]], axis=1)
        fhi = np.concatenate([fm[:, bad], fhi[:, bad]], axis=1)
        fm = np.concatenate([fml[:, bad], fmr[:, bad]], axis=1)
        whole = np.concatenate([left[:, bad], right[:, bad]], axis=1)
        mid = 0.5 * (lo + hi)
    raise QuadratureError(f"adaptive Simpson did not converge to {tol:g} within "
                          f"{evals} evaluations ({lo.size} intervals unresolved near v={lo[0]:.4g})")


def euler_nodes(A: float, N: int):
    """Equally spaced nodes on [0, A] with trapezoidal weights."""
    v = np.linspace(0.0, A, N + 1)
    w = np.full(N + 1, A / N)
    w[0] *= 0.5
    w[-1] *= 0.5
    return v, w


def time_value(K, F_t: float, cf, grid: PricingGrid = DEFAULT_GRID):
    """Time value C(K) - (F - K)^+ for one or many strikes."""
    K_arr = np.asarray(K, dtype=float)
    strikes = np.atleast_1d(K_arr).ravel()
    b = F_t - strikes
    half_var = 0.5 * _variance(cf)
    A = _effective_bound(cf, grid)
    if grid.quad_mode == "euler_sum":
        v, w = euler_nodes(A, grid.N)
        body = kernels.mt_time_values(v, w, _log_cf(cf, v), F_t, strikes, half_var)
        body = body + _euler_end_correction(b, A, A / grid.N)
    else:
        n_init = max(16, int(math.ceil(np.max(np.abs(b)) * A / math.pi)))
        body, _ = _adaptive_simpson(lambda v: _integrand(v, b, cf, half_var), 0.0, A,
                                    grid.abs_tol, n_init, grid.max_evals)
    out = body + _tail(b, A)
    return float(out[0]) if K_arr.ndim == 0 else out.reshape(K_arr.shape)


def call_price(K, F_t: float, cf, grid: PricingGrid = DEFAULT_GRID):
    intrinsic = np.maximum(F_t - np.asarray(K, dtype=float), 0.0)
    return time_value(K, F_t, cf, grid) + intrinsic


def put_price(K, F_t: float, cf, grid: PricingGrid = DEFAULT_GRID):
    """Put by parity C - P = F - K."""
    return call_price(K, F_t, cf, grid) - (F_t - np.asarray(K, dtype=float))


def call_price_grid(k_low: float, kappa: float, m: int, F_t: float, cf,
                    grid: PricingGrid = DEFAULT_GRID):
    """Prices on the strike ladder k_low + kappa*(u-1), u = 1..m, sharing one frequency grid."""
    if m < 1 or not kappa > 0:
        raise ValueError("need m >= 1 and kappa > 0")
    strikes = k_low + kappa * np.arange(m)
    A = _effective_bound(cf, grid)
    v, w = euler_nodes(A, grid.N)
    tv = kernels.mt_time_values(v, w, _log_cf(cf, v), F_t, strikes, 0.5 * _variance(cf))
    b = F_t - strikes
    return tv + _euler_end_correction(b, A, A / grid.N) + _tail(b, A) + np.maximum(b, 0.0)


# ---------------------------------------------------------------------------
# Closed-form references
# ---------------------------------------------------------------------------


def black_call(F, K, sigma, tau):
    """Black (1976) call with zero rate; sigma per sqrt(day), tau in days."""
    F, K, sigma, tau = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (F, K, sigma, tau)))
    s = sigma * np.sqrt(tau)
    intrinsic = np.maximum(F - K, 0.0)
    live = (s > 0) & (K > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(F / K) + 0.5 * s * s) / s
        d2 = d1 - s
        val = F * ndtr(d1) - K * ndtr(d2)
    out = np.where(live, np.maximum(val, intrinsic), np.where(K <= 0, F - K, intrinsic))
    return float(out) if out.ndim == 0 else out


def bachelier_call(F, K, sigma_total):
    """Normal-model call; sigma_total is the price standard deviation at expiry."""
    F, K, s = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (F, K, sigma_total)))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (F - K) / s
        val = (F - K) * ndtr(d) + s * np.exp(-0.5 * d * d) / _SQRT_2PI
    out = np.where(s > 0, val, np.maximum(F - K, 0.0))
    return float(out) if out.ndim == 0 else out


def implied_vol(price: float, F: float, K: float, tau: float, tol: float = 1e-10) -> float:
    """Black implied volatility by bisection."""
    lower = max(F - K, 0.0)
    if not price > lower:
        raise ValueError(f"price {price!r} is at or below the lower no-arbitrage bound (F-K)^+ = {lower!r}")
    if not price < F:
        raise ValueError(f"price {price!r} is at or above the upper no-arbitrage bound F = {F!r}")
    lo, hi = 1e-8, 1.0
    while black_call(F, K, hi, tau) < price:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("implied volatility bracket could not be expanded")
    while black_call(F, K, lo, tau) > price:
        lo *= 0.5
        if lo < 1e-300:
            raise ValueError("implied volatility bracket could not be expanded")
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if black_call(F, K, mid, tau) < price:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    resid = abs(black_call(F, K, sigma, tau) - price)
    if resid > max(tol, 8 * np.finfo(float).eps * F):
        raise ValueError(f"implied volatility residual {resid:.3g} exceeds {tol:g}")
    return sigma


def implied_vol_array(price, F, K, tau, iters: int = 80):
    """Vectorised bisection; NaN where the price is outside the no-arbitrage band."""
    price, F, K, tau = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (price, F, K, tau)))
    ok = (price > np.maximum(F - K, 0.0)) & (price < F)
    lo = np.full(price.shape, 1e-8)
    hi = np.ones(price.shape)
    for _ in range(60):
        low = ok & (black_call(F, K, hi, tau) < price)
        if not low.any():
            break
        hi = np.where(low, 2.0 * hi, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = black_call(F, K, mid, tau) < price
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.where(ok, 0.5 * (lo + hi), np.nan)
