"""Least-squares calibration of the Black, one-factor and two-factor models.

The two-factor search runs in an unconstrained space:

    log alpha_j, s_j (beta_j = alpha_j tanh s_j), log gamma1, log mu,
    log Gamma2(atom) for every atomic delivery period.

Composite Gamma2 values never appear as coordinates; they are rebuilt from the
atoms by day-count weighting, so the overlapping-delivery constraints hold
exactly at every trial point.  The one-factor model fixes gamma1 = 0 and drops
(alpha1, beta1, mu).
"""
from __future__ import annotations

import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .forward_model import TwoFactorCF, TwoFactorParams, gamma1_coeff, noa_check
from .fourier_pricer import (DEFAULT_GRID, PricingGrid, QuadratureError, black_call,
                             call_price, implied_vol_array)
from .nig_core import NigParams, moments

log = logging.getLogger(__name__)

SENTINEL = 1e12
MODEL_KINDS = ("black", "one_factor", "two_factor")
OBJECTIVES = ("price", "iv")

# Boxes for random starting points (log-uniform unless noted).
START_BOXES = {
    "alpha1": (0.05, 1.0),
    "skew1": (0.0, 0.6),  # beta1 / alpha1, uniform
    "alpha2": (1e-4, 1e-2),
    "skew2": (0.0, 0.6),
    "mu": (1e-3, 2e-2),
}
_BOX_CENTRE = dict(alpha1=0.2, skew1=0.25, alpha2=1e-3, skew2=0.3, mu=5e-3)
_LOG_CLIP = 50.0
_SKEW_CLIP = 15.0


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CalibrationConfig:
    model_kind: str = "two_factor"
    objective: str = "price"
    grid: PricingGrid = DEFAULT_GRID
    optimizer_budget: int = 20_000
    multistart: int = 1
    seed: int = 0
    penalty_weight: float = 1.0
    start: TwoFactorParams | None = None
    start_spread: float = 0.2
    polish: bool = True

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.optimizer_budget < 1 or self.multistart < 1:
            raise ValueError("optimizer_budget and multistart must be at least 1")


@dataclass
class CalibrationResult:
    model_kind: str
    params: object  # TwoFactorParams, or {label: sigma} for the Black model
    objective: float
    rmse_price: dict
    rmse_iv: dict
    n_evals: int
    converged: bool
    start_index: int = 0
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Problem set-up
# ---------------------------------------------------------------------------


@dataclass
class _Contract:
    label: str
    T: int
    period: object
    F: float
    strikes: np.ndarray
    prices: np.ndarray
    ivs: np.ndarray


def _contracts(snapshot) -> list:
    out = []
    for label, T, quotes in snapshot.contracts():
        F = snapshot.forward(label)
        strikes = np.array([q.strike for q in quotes])
        prices = np.array([q.settlement_price for q in quotes])
        out.append(_Contract(label, T, snapshot.period(label), F, strikes, prices,
                             implied_vol_array(prices, F, strikes, T)))
    return out


def atomic_periods(snapshot) -> list:
    """Atoms that carry a free Gamma2 coordinate, in snapshot order."""
    order = [p for p, _ in snapshot.futures.values()]
    return sorted(snapshot.decomp.atoms, key=order.index)


def encode(p: TwoFactorParams, atoms, model_kind: str = "two_factor") -> np.ndarray:
    g2 = [math.log(p.gamma2[a]) for a in atoms]
    tail = [math.log(p.alpha2), math.atanh(p.beta2 / p.alpha2)]
    if model_kind == "one_factor":
        return np.array(tail + g2)
    head = [math.log(p.alpha1), math.atanh(p.beta1 / p.alpha1)]
    return np.array(head + tail + [math.log(p.gamma1), math.log(p.mu)] + g2)


def decode(x, atoms, model_kind: str = "two_factor") -> TwoFactorParams:
    x = np.asarray(x, dtype=float)
    lg = np.clip(x, -_LOG_CLIP, _LOG_CLIP)
    sk = np.clip(x, -_SKEW_CLIP, _SKEW_CLIP)
    if model_kind == "one_factor":
        a2 = math.exp(lg[0])
        g2 = {a: math.exp(v) for a, v in zip(atoms, lg[2:])}
        return TwoFactorParams(1.0, 0.0, a2, a2 * math.tanh(sk[1]), 0.0, 0.0, g2)
    a1, a2 = math.exp(lg[0]), math.exp(lg[2])
    g2 = {a: math.exp(v) for a, v in zip(atoms, lg[6:])}
    return TwoFactorParams(a1, a1 * math.tanh(sk[1]), a2, a2 * math.tanh(sk[3]),
                           math.exp(lg[4]), math.exp(lg[5]), g2)


def model_prices(params: TwoFactorParams, contracts, decomp, grid: PricingGrid) -> list:
    return [call_price(c.strikes, c.F, TwoFactorCF(params, 0.0, c.T, c.period, decomp), grid)
            for c in contracts]


def _residuals(params, contracts, decomp, config: CalibrationConfig) -> np.ndarray:
    prices = model_prices(params, contracts, decomp, config.grid)
    if config.objective == "price":
        return np.concatenate([m - c.prices for m, c in zip(prices, contracts)])
    out = []
    for m, c in zip(prices, contracts):
        iv = implied_vol_array(m, c.F, c.strikes, c.T)
        ok = np.isfinite(c.ivs)
        r = np.where(np.isfinite(iv), iv - c.ivs, math.sqrt(config.penalty_weight))
        out.append(r[ok])
    return np.concatenate(out)


class _Objective:
    """Counts evaluations, maps pricing failures to a large finite sentinel."""

    def __init__(self, contracts, decomp, atoms, config):
        self.contracts, self.decomp, self.atoms, self.config = contracts, decomp, atoms, config
        self.n_evals = 0
        self.best = math.inf
        self.trace = []

    def residuals(self, x):
        params = decode(x, self.atoms, self.config.model_kind)
        return _residuals(params, self.contracts, self.decomp, self.config)

    def __call__(self, x):
        self.n_evals += 1
        try:
            r = self.residuals(x)
            val = float(r @ r)
            if not math.isfinite(val):
                raise FloatingPointError("non-finite objective")
        except (QuadratureError, FloatingPointError, ValueError, OverflowError) as exc:
            log.debug("pricing failed at trial point: %s", exc)
            val = SENTINEL
        if val < self.best:
            self.best = val
        if self.n_evals % 500 == 0:
            self.trace.append((self.n_evals, self.best))
        return val


def _check_snapshot(snapshot):
    if not snapshot.options:
        raise CalibrationError("snapshot contains no option quotes")
    violations = noa_check(snapshot, 1e-6)
    for v in violations:
        warnings.warn(f"futures prices violate the overlapping-delivery relation: {v}")


def objective_price(theta, snapshot, config: CalibrationConfig) -> float:
    """Sum of squared price errors at the parameter vector ``theta``."""
    cfg = config if config.objective == "price" else _with(config, objective="price")
    f = _Objective(_contracts(snapshot), snapshot.decomp, atomic_periods(snapshot), cfg)
    return f(np.asarray(theta, dtype=float))


def objective_iv(theta, snapshot, config: CalibrationConfig) -> float:
    """Sum of squared implied-volatility errors; out-of-band prices cost ``penalty_weight``."""
    cfg = config if config.objective == "iv" else _with(config, objective="iv")
    f = _Objective(_contracts(snapshot), snapshot.decomp, atomic_periods(snapshot), cfg)
    return f(np.asarray(theta, dtype=float))


def _with(config, **kw):
    d = {k: getattr(config, k) for k in config.__dataclass_fields__}
    d.update(kw)
    return CalibrationConfig(**d)


# ---------------------------------------------------------------------------
# Starting points
# ---------------------------------------------------------------------------


def _atm_black_sigma(c: _Contract) -> float:
    i = int(np.argmin(np.abs(c.strikes - c.F)))
    iv = c.ivs[i]
    if not np.isfinite(iv):
        finite = c.ivs[np.isfinite(c.ivs)]
        iv = float(np.median(finite)) if finite.size else 0.01
    return float(iv)


def heuristic_start(contracts, atoms, model_kind, draws=None) -> TwoFactorParams:
    """Starting parameters that split each contract's Black variance between the factors."""
    d = dict(_BOX_CENTRE) if draws is None else draws
    a1, a2 = d["alpha1"], d["alpha2"]
    b1, b2 = a1 * d["skew1"], a2 * d["skew2"]
    var1 = moments(NigParams(a1, b1))[1]
    var2 = moments(NigParams(a2, b2))[1]
    # per-day price variance implied by Black, per delivery period
    s2 = {c.period: (_atm_black_sigma(c) * c.F) ** 2 for c in contracts}
    T_of = {c.period: c.T for c in contracts}
    mu = d["mu"]
    gamma1 = 0.0
    if model_kind == "two_factor":
        front = min(contracts, key=lambda c: c.period.start)
        avg = float(np.mean(gamma1_coeff(np.linspace(0, front.T, 16), front.period, 1.0, mu) ** 2))
        gamma1 = math.sqrt(0.5 * s2[front.period] / (var1 * avg))
    g2 = {}
    for a in atoms:
        target = s2.get(a)
        if target is None:
            target = float(np.mean(list(s2.values())))
        share = 0.0
        if gamma1 > 0 and a in T_of:
            u = np.linspace(0, T_of[a], 16)
            share = gamma1 ** 2 * var1 * float(np.mean(gamma1_coeff(u, a, 1.0, mu) ** 2))
        g2[a] = math.sqrt(max(target - share, 0.1 * target) / var2)
    if model_kind == "one_factor":
        return TwoFactorParams(1.0, 0.0, a2, b2, 0.0, 0.0, g2)
    return TwoFactorParams(a1, b1, a2, b2, gamma1, mu, g2)


def _draw_box(rng) -> dict:
    out = {}
    for k, (lo, hi) in START_BOXES.items():
        if k.startswith("skew"):
            out[k] = rng.uniform(lo, hi)
        else:
            out[k] = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    return out


def starting_points(contracts, atoms, config: CalibrationConfig) -> list:
    """Start k depends only on (seed, k), so more starts never drop earlier ones."""
    kind = config.model_kind
    if config.start is not None:
        x0 = encode(config.start, atoms, kind)
    else:
        x0 = encode(heuristic_start(contracts, atoms, kind), atoms, kind)
    points = [x0]
    for k in range(1, config.multistart):
        rng = np.random.default_rng([config.seed, k])
        if config.start is not None:
            points.append(x0 + config.start_spread * rng.standard_normal(x0.size))
        else:
            points.append(encode(heuristic_start(contracts, atoms, kind, _draw_box(rng)), atoms, kind))
    return points


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------


def _nelder_mead(f: _Objective, x0, budget):
    best_x, best_f = np.asarray(x0, float), f(x0)
    converged = False
    while f.n_evals < budget:
        res = optimize.minimize(f, best_x, method="Nelder-Mead",
                                options=dict(maxfev=budget - f.n_evals, xatol=1e-9,
                                             fatol=1e-14, adaptive=True))
        improved = best_f - res.fun > 1e-10 * (1.0 + abs(best_f))
        if res.fun < best_f:
            best_x, best_f = res.x, float(res.fun)
        if not improved:
            converged = True
            break
    return best_x, best_f, converged


def _polish(f: _Objective, x, budget):
    """Trust-region least squares on the residual vector, started from the simplex optimum."""
    remaining = budget - f.n_evals
    if remaining <= len(x) + 1:
        return x, False

    def resid(z):
        f.n_evals += 1
        try:
            r = f.residuals(z)
        except (QuadratureError, ValueError, OverflowError):
            r = None
        if r is None or not np.all(np.isfinite(r)):
            return np.full(f.n_residuals, math.sqrt(SENTINEL / f.n_residuals))
        return r

    f.n_residuals = len(f.residuals(x))
    res = optimize.least_squares(resid, x, method="trf", x_scale="jac", diff_step=1e-7,
                                 xtol=1e-14, ftol=1e-15, gtol=1e-15, max_nfev=remaining)
    return res.x, res.status > 0


def _run_start(k, x0, contracts, decomp, atoms, config):
    f = _Objective(contracts, decomp, atoms, config)
    # The simplex gets a third of the budget to get close; the trust-region
    # polish then converges quickly on the smooth residual vector.
    nm_budget = config.optimizer_budget // 3 if config.polish else config.optimizer_budget
    x, fx, converged = _nelder_mead(f, x0, max(nm_budget, 1))
    if config.polish:
        xp, ok = _polish(f, x, config.optimizer_budget)
        fp = f(xp)
        if fp <= fx:
            x, fx, converged = xp, fp, converged or ok
    f.trace.append((f.n_evals, fx))
    return k, x, fx, converged, f.n_evals, f.trace


def _threads() -> int:
    env = os.environ.get("VOLTSMILE_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def _rmse(model, contracts):
    price, iv = {}, {}
    for m, c in zip(model, contracts):
        price[c.label] = float(np.sqrt(np.mean((m - c.prices) ** 2)))
        miv = implied_vol_array(m, c.F, c.strikes, c.T)
        ok = np.isfinite(miv) & np.isfinite(c.ivs)
        iv[c.label] = float(np.sqrt(np.mean((miv[ok] - c.ivs[ok]) ** 2))) if ok.any() else math.nan
    return price, iv


def _calibrate_black(contracts, config) -> CalibrationResult:
    sigmas, total, model = {}, 0.0, []
    for c in contracts:
        if config.objective == "iv":
            ok = np.isfinite(c.ivs)
            sigma = float(np.mean(c.ivs[ok]))
            err = float(np.sum((c.ivs[ok] - sigma) ** 2))
        else:
            def sse(s, c=c):
                r = black_call(c.F, c.strikes, s, c.T) - c.prices
                return float(r @ r)
            guess = _atm_black_sigma(c)
            res = optimize.minimize_scalar(sse, bounds=(guess / 20, guess * 20), method="bounded",
                                           options=dict(xatol=1e-14, maxiter=500))
            sigma, err = float(res.x), float(res.fun)
        sigmas[c.label] = sigma
        total += err
        model.append(black_call(c.F, c.strikes, sigma, c.T))
    rp, ri = _rmse(model, contracts)
    return CalibrationResult("black", sigmas, total, rp, ri, len(contracts), True)


def calibrate(snapshot, config: CalibrationConfig = CalibrationConfig()) -> CalibrationResult:
    """Best-of-multistart fit of ``config.model_kind`` to the snapshot."""
    _check_snapshot(snapshot)
    contracts = _contracts(snapshot)
    if config.model_kind == "black":
        return _calibrate_black(contracts, config)
    atoms = atomic_periods(snapshot)
    starts = starting_points(contracts, atoms, config)
    with ThreadPoolExecutor(max_workers=min(_threads(), len(starts))) as pool:
        runs = list(pool.map(lambda a: _run_start(a[0], a[1], contracts, snapshot.decomp, atoms, config),
                             enumerate(starts)))
    finite = [r for r in runs if r[2] < SENTINEL]
    if not finite:
        raise CalibrationError("all starting points diverged")
    k, x, _, converged, _, _ = min(finite, key=lambda r: (r[2], r[0]))
    params = decode(x, atoms, config.model_kind)
    final = _Objective(contracts, snapshot.decomp, atoms, config)
    objective = final(x)
    model = model_prices(params, contracts, snapshot.decomp, config.grid)
    rp, ri = _rmse(model, contracts)
    trace = [f"start {r[0]} evals {n} best {v:.12e}" for r in runs for n, v in r[5]]
    return CalibrationResult(config.model_kind, params, objective, rp, ri,
                             sum(r[4] for r in runs), converged, k, trace)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

REPORT_FIELDS = ["contract", "delivery_start", "exercise_day", "strike", "model",
                 "market_price", "model_price", "market_iv", "model_iv"]


def fit_report(results, snapshot, config: CalibrationConfig = CalibrationConfig()) -> list:
    """Tidy per-quote records for one or several calibrated models."""
    if isinstance(results, CalibrationResult):
        results = [results]
    contracts = _contracts(snapshot)
    rows = []
    for res in results:
        if res.model_kind == "black":
            model = [black_call(c.F, c.strikes, res.params[c.label], c.T) for c in contracts]
        else:
            model = model_prices(res.params, contracts, snapshot.decomp, config.grid)
        for m, c in zip(model, contracts):
            miv = implied_vol_array(m, c.F, c.strikes, c.T)
            for i, k in enumerate(c.strikes):
                rows.append(dict(contract=c.label, delivery_start=c.period.start, exercise_day=c.T,
                                 strike=float(k), model=res.model_kind,
                                 market_price=float(c.prices[i]), model_price=float(m[i]),
                                 market_iv=float(c.ivs[i]), model_iv=float(miv[i])))
    return rows
