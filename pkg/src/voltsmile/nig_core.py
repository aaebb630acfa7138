"""Centered Normal Inverse Gaussian driver.

A NIG(alpha, beta, delta, m) Levy process is centered by choosing the
location m = -delta*beta/gamma, gamma = sqrt(alpha^2 - beta^2), so no location
is stored.  Units: alpha and beta in 1/price, delta in price per day.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import k1e

from . import kernels


@dataclass(frozen=True)
class NigParams:
    alpha: float
    beta: float
    delta: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not abs(self.beta) < self.alpha:
            raise ValueError(f"need |beta| < alpha, got beta={self.beta}, alpha={self.alpha}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")

    @property
    def gamma(self) -> float:
        """Steepness sqrt(alpha^2 - beta^2)."""
        return math.sqrt((self.alpha - self.beta) * (self.alpha + self.beta))

    @property
    def location(self) -> float:
        return -self.delta * self.beta / self.gamma


def cumulant_centered(p: NigParams, theta):
    """log E[exp(i theta J(1))] for the centered process.

    Accepts a scalar or an array of real frequencies.  The evaluation is
    algebraically rearranged so that it stays accurate for tiny theta.
    """
    th = np.asarray(theta, dtype=float)
    out = kernels.nig_cumulant(np.atleast_1d(th).ravel(), p.alpha, p.beta, p.delta)
    if th.ndim == 0:
        return complex(out[0])
    return out.reshape(th.shape)


def density_centered(p: NigParams, x):
    """Density of J(1)."""
    x = np.asarray(x, dtype=float)
    a, b, d, g = p.alpha, p.beta, p.delta, p.gamma
    y = x - p.location
    r = np.hypot(d, y)
    # K1(z) = k1e(z) exp(-z); fold the exponentials together to avoid overflow
    log_scale = d * g + b * y - a * r
    return (a * d / math.pi) * np.exp(log_scale) * k1e(a * r) / r


def moments(p: NigParams) -> tuple[float, float, float, float]:
    """(mean, variance, skewness, excess kurtosis) of J(1)."""
    a, b, d, g = p.alpha, p.beta, p.delta, p.gamma
    var = d * a * a / g**3
    skew = 3.0 * b / (a * math.sqrt(d * g))
    kurt = 3.0 * (1.0 + 4.0 * b * b / (a * a)) / (d * g)
    return 0.0, var, skew, kurt


def scale(p: NigParams, c: float) -> NigParams:
    """Law of c * J(1): NIG(alpha/c, beta/c, delta*c)."""
    if not c > 0:
        raise ValueError(f"scale factor must be positive, got {c}")
    return NigParams(p.alpha / c, p.beta / c, p.delta * c)


def sample_inverse_gaussian(mean, shape, rng: np.random.Generator, size=None):
    """Inverse Gaussian draws by the Michael-Schucany-Haas transformation."""
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(shape, dtype=float)
    if size is None:
        size = np.broadcast(mean, shape).shape
    nu = rng.standard_normal(size)
    y = nu * nu
    my = mean * y
    # mean - mean/(2 shape) (sqrt(4 mean shape y + (mean y)^2) - mean y), cancellation-free
    x = mean - 2.0 * mean * my / (my + np.sqrt(4.0 * mean * shape * y + my * my))
    u = rng.random(size)
    return np.where(u <= mean / (mean + x), x, mean * mean / x)


def sample_increment(p: NigParams, dt: float, rng: np.random.Generator, size=None):
    """Draws of J(t + dt) - J(t) via inverse-Gaussian subordination."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = p.gamma
    dd = p.delta * dt
    z = sample_inverse_gaussian(dd / g, dd * dd, rng, size)
    w = rng.standard_normal(np.shape(z))
    return p.beta * z + np.sqrt(z) * w - dd * p.beta / g
