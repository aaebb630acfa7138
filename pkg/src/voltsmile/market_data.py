"""Quote ingestion, strike filtering and synthetic snapshots.

File formats (UTF-8, comma separated, header row required):

    futures.csv  label,delivery_start,delivery_end,price
    options.csv  underlying_label,exercise_date,strike,settlement_price

Dates are ISO-8601; ``delivery_end`` is the last delivery day (inclusive).
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .forward_model import (AtomicDecomposition, DeliveryPeriod, LabelError, TwoFactorCF,
                            TwoFactorParams, atomic_decomposition, label_dates)
from .fourier_pricer import DEFAULT_GRID, PricingGrid, call_price

log = logging.getLogger(__name__)

FUTURES_HEADER = ["label", "delivery_start", "delivery_end", "price"]
OPTIONS_HEADER = ["underlying_label", "exercise_date", "strike", "settlement_price"]


class InputError(ValueError):
    """Malformed or inconsistent market input."""


@dataclass(frozen=True)
class OptionQuote:
    underlying_label: str
    delivery: DeliveryPeriod
    exercise_day: int
    strike: float
    settlement_price: float

    def __post_init__(self):
        if not self.strike > 0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if self.settlement_price < 0:
            raise ValueError(f"negative settlement price {self.settlement_price}")
        if self.exercise_day > self.delivery.start:
            raise ValueError(f"exercise day {self.exercise_day} after start of delivery "
                             f"of {self.underlying_label}")


@dataclass(frozen=True)
class MarketSnapshot:
    valuation_date: dt.date
    futures: dict
    options: tuple = ()
    decomp: AtomicDecomposition = field(default=None)

    def __post_init__(self):
        for q in self.options:
            if q.underlying_label not in self.futures:
                raise ValueError(f"option on unknown underlying {q.underlying_label!r}")
        if self.decomp is None:
            object.__setattr__(self, "decomp",
                               atomic_decomposition([p for p, _ in self.futures.values()]))

    def period(self, label: str) -> DeliveryPeriod:
        return self.futures[label][0]

    def forward(self, label: str) -> float:
        return self.futures[label][1]

    def contracts(self) -> list:
        """Quotes grouped by (underlying, exercise day), strikes ascending."""
        groups: dict = {}
        for q in self.options:
            groups.setdefault((q.underlying_label, q.exercise_day), []).append(q)
        labels = list(self.futures)
        keys = sorted(groups, key=lambda k: (labels.index(k[0]), k[1]))
        return [(k[0], k[1], sorted(groups[k], key=lambda q: q.strike)) for k in keys]


def _date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            head = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: missing header row") from None
        if head != header:
            raise InputError(f"{path}: expected header {','.join(header)}, got {','.join(head)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, row


def load_futures(path, valuation_date: dt.date) -> dict:
    futures: dict = {}
    errors = []
    for lineno, row in _read_rows(path, FUTURES_HEADER):
        try:
            if len(row) != 4:
                raise ValueError(f"expected 4 fields, got {len(row)}")
            label = row[0].strip()
            start, last = _date(row[1]), _date(row[2])
            price = float(row[3])
            kind, first, nxt = label_dates(label)
            if (start, last) != (first, nxt - dt.timedelta(days=1)):
                raise ValueError(f"dates {start}..{last} do not match label {label!r}")
            if label in futures:
                raise ValueError(f"duplicate futures label {label!r}")
            if not math.isfinite(price):
                raise ValueError("price is not finite")
            period = DeliveryPeriod((start - valuation_date).days,
                                    (last - valuation_date).days + 1, label, kind)
            futures[label] = (period, price)
        except (ValueError, LabelError) as exc:
            errors.append(f"{path}:{lineno}: {exc}")
    if errors:
        raise InputError("\n".join(errors))
    return futures


def load_options(path, futures: dict, valuation_date: dt.date) -> list:
    quotes, seen, errors = [], set(), []
    for lineno, row in _read_rows(path, OPTIONS_HEADER):
        try:
            if len(row) != 4:
                raise ValueError(f"expected 4 fields, got {len(row)}")
            label = row[0].strip()
            if label not in futures:
                raise ValueError(f"option references missing underlying {label!r}")
            exercise = (_date(row[1]) - valuation_date).days
            strike, price = float(row[2]), float(row[3])
            if not strike > 0:
                raise ValueError(f"strike must be positive, got {row[2].strip()}")
            key = (label, strike)
            if key in seen:
                raise ValueError(f"duplicate quote for {label} strike {strike:g}")
            seen.add(key)
            quotes.append(OptionQuote(label, futures[label][0], exercise, strike, price))
        except ValueError as exc:
            errors.append(f"{path}:{lineno}: {exc}")
    if errors:
        raise InputError("\n".join(errors))
    return quotes


def load_snapshot(futures_file, options_file, valuation_date: dt.date) -> MarketSnapshot:
    futures = load_futures(futures_file, valuation_date)
    options = load_options(options_file, futures, valuation_date) if options_file else []
    return MarketSnapshot(valuation_date, futures, tuple(options))


def save_snapshot(snapshot: MarketSnapshot, futures_file, options_file=None) -> None:
    ref = snapshot.valuation_date
    with open(futures_file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FUTURES_HEADER)
        for label, (p, price) in snapshot.futures.items():
            w.writerow([label, (ref + dt.timedelta(days=p.start)).isoformat(),
                        (ref + dt.timedelta(days=p.end - 1)).isoformat(), repr(float(price))])
    if options_file is not None:
        with open(options_file, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(OPTIONS_HEADER)
            for q in snapshot.options:
                w.writerow([q.underlying_label, (ref + dt.timedelta(days=q.exercise_day)).isoformat(),
                            repr(float(q.strike)), repr(float(q.settlement_price))])


def filter_strikes(snapshot: MarketSnapshot, lo_frac: float = 0.90, hi_frac: float = 1.10) -> MarketSnapshot:
    """Keep quotes with lo_frac*F <= K <= hi_frac*F."""
    if not 0 < lo_frac < hi_frac:
        raise ValueError("need 0 < lo_frac < hi_frac")
    kept = []
    for q in snapshot.options:
        F = snapshot.forward(q.underlying_label)
        if lo_frac * F * (1 - 1e-12) <= q.strike <= hi_frac * F * (1 + 1e-12):
            kept.append(q)
    before = {q.underlying_label for q in snapshot.options}
    after = {q.underlying_label for q in kept}
    for label in sorted(before - after):
        log.warning("all strikes of %s lie outside [%g, %g] x F; contract dropped", label, lo_frac, hi_frac)
    return replace(snapshot, options=tuple(kept))


# ---------------------------------------------------------------------------
# Synthetic markets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticContract:
    label: str
    price: float | None = None
    strikes: tuple | None = None
    exercise_lag: int = 3
    kappa: float = 1.0
    band: tuple = (0.90, 1.10)

    def ladder(self, F: float) -> np.ndarray:
        if self.strikes is not None:
            return np.asarray(self.strikes, dtype=float)
        lo = math.ceil(self.band[0] * F / self.kappa - 1e-9) * self.kappa
        hi = math.floor(self.band[1] * F / self.kappa + 1e-9) * self.kappa
        return lo + self.kappa * np.arange(int(round((hi - lo) / self.kappa)) + 1)


def synthetic_market(params: TwoFactorParams, contracts, valuation_date: dt.date,
                     grid: PricingGrid = DEFAULT_GRID, noise: float = 0.0,
                     seed: int = 0) -> MarketSnapshot:
    """Snapshot whose settlement prices are model prices under ``params``.

    Composite futures prices are set to the day-weighted average of their
    atoms; Gamma2 keys of ``params`` must be periods relative to
    ``valuation_date``.
    """
    periods = {}
    for c in contracts:
        kind, first, nxt = label_dates(c.label)
        periods[c.label] = DeliveryPeriod((first - valuation_date).days,
                                          (nxt - valuation_date).days, c.label, kind)
    decomp = atomic_decomposition(periods.values())
    prices = {c.label: c.price for c in contracts}
    by_period = {p: lab for lab, p in periods.items()}
    for comp, ws in decomp.compositions.items():
        prices[by_period[comp]] = math.fsum(float(w) * prices[by_period[a]] for a, w in ws)
    futures = {c.label: (periods[c.label], float(prices[c.label])) for c in contracts}
    rng = np.random.default_rng(seed)
    quotes = []
    for c in contracts:
        period, F = futures[c.label]
        T = period.start - c.exercise_lag
        strikes = c.ladder(F)
        cf = TwoFactorCF(params, 0.0, T, period, decomp)
        model = call_price(strikes, F, cf, grid)
        if noise > 0:
            model = np.maximum(model + noise * rng.standard_normal(model.shape), 0.0)
        quotes.extend(OptionQuote(c.label, period, T, float(k), float(p))
                      for k, p in zip(strikes, model))
    return MarketSnapshot(valuation_date, futures, tuple(quotes), decomp)


def published_contracts(kappa: float = 1.0) -> list:
    """The fourteen contracts of the 2018-03-05 snapshot with illustrative futures levels."""
    from .published import CONTRACT_LABELS, SYNTHETIC_FUTURES
    return [SyntheticContract(lab, SYNTHETIC_FUTURES.get(lab), kappa=kappa) for lab in CONTRACT_LABELS]


def published_two_factor(reference: dt.date | None = None) -> TwoFactorParams:
    """Two-factor parameters as published, with Gamma2 on the atomic periods."""
    from .published import CONTRACT_LABELS, TWO_FACTOR, VALUATION_DATE
    from .forward_model import period_from_label
    ref = reference or VALUATION_DATE
    periods = [period_from_label(lab, ref) for lab in CONTRACT_LABELS]
    decomp = atomic_decomposition(periods)
    g2 = {p: g for p, g in zip(periods, TWO_FACTOR["gamma2"]) if p in decomp.atoms}
    return TwoFactorParams(TWO_FACTOR["alpha1"], TWO_FACTOR["beta1"], TWO_FACTOR["alpha2"],
                           TWO_FACTOR["beta2"], TWO_FACTOR["gamma1"], TWO_FACTOR["mu"], g2)
