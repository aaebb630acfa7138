"""Monte Carlo simulation of the two-factor model.

Independent check on the Fourier prices.  The Gamma2 term is sampled
exactly over [t, T]; the Gamma1 integral uses an Euler scheme on ``n_steps``
sub-intervals.  Paths are produced in fixed-size batches, each with its own
child seed, so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .forward_model import gamma1_coeff, resolve_gamma2
from .nig_core import sample_increment

BATCH = 125_000


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 1_000_000
    n_steps: int = 32
    seed: int = 0
    scheme: str = "left"

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be at least 1")
        if self.scheme not in ("left", "midpoint"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


def _threads() -> int:
    env = os.environ.get("VOLTSMILE_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def _batch(p, coeffs, dt, g2, tau, size, seed_seq):
    rng = np.random.default_rng(seed_seq)
    z = np.zeros(size)
    if p.gamma1 > 0:
        nig1 = p.nig1
        for c in coeffs:
            z += c * sample_increment(nig1, dt, rng, size)
    if g2 > 0:
        z += g2 * sample_increment(p.nig2, tau, rng, size)
    return z


def simulate_terminal(p, t, T, period, decomp, mc: McConfig, F_t: float = 0.0):
    """Samples of F(T) given F(t) = F_t."""
    if not t < T:
        raise ValueError(f"need t < T, got t={t}, T={T}")
    if T > period.start:
        raise ValueError("exercise after start of delivery")
    tau = T - t
    dt = tau / mc.n_steps
    offset = 0.5 if mc.scheme == "midpoint" else 0.0
    u = t + dt * (np.arange(mc.n_steps) + offset)
    coeffs = np.atleast_1d(gamma1_coeff(u, period, p.gamma1, p.mu))
    g2 = resolve_gamma2(p, period, decomp)
    sizes = [BATCH] * (mc.n_paths // BATCH)
    if mc.n_paths % BATCH:
        sizes.append(mc.n_paths % BATCH)
    seeds = np.random.SeedSequence(mc.seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=min(_threads(), len(sizes))) as pool:
        parts = list(pool.map(lambda a: _batch(p, coeffs, dt, g2, tau, *a), zip(sizes, seeds)))
    return F_t + np.concatenate(parts)


def mc_call_price(strike, p, t, T, period, decomp, mc: McConfig, F_t: float):
    """(price, standard error) for one strike or an array of strikes.

    All strikes share the same paths.
    """
    F_T = simulate_terminal(p, t, T, period, decomp, mc, F_t)
    k = np.atleast_1d(np.asarray(strike, dtype=float))
    price, err = np.empty(k.size), np.empty(k.size)
    for i, kk in enumerate(k):
        pay = np.maximum(F_T - kk, 0.0)
        price[i] = pay.mean()
        err[i] = pay.std(ddof=1) / math.sqrt(pay.size) if pay.size > 1 else 0.0
    if np.ndim(strike) == 0:
        return float(price[0]), float(err[0])
    return price, err
