import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voltsmile import calibration as cal
from voltsmile.calibration import (CalibrationConfig, CalibrationError, calibrate, decode, encode, fit_report,
                                   objective_iv, objective_price)
from voltsmile.forward_model import TwoFactorParams, gamma2_composite, period_from_label
from voltsmile.fourier_pricer import QuadratureError, black_call
from voltsmile.market_data import MarketSnapshot, OptionQuote, SyntheticContract, synthetic_market
from voltsmile.published import VALUATION_DATE

REF = VALUATION_DATE
LABELS = ["Apr/18", "May/18", "Jun/18", "Q2/18"]


@pytest.fixture(scope="module")
def small_snapshot(table2):
    contracts = [SyntheticContract(lab, px) for lab, px in zip(LABELS, [36.0, 33.5, 35.0, None])]
    return synthetic_market(table2, contracts, REF)


@pytest.fixture(scope="module")
def atoms(small_snapshot):
    return cal.atomic_periods(small_snapshot)


@pytest.fixture(scope="module")
def truth(table2, atoms):
    return table2.replace(gamma2={a: table2.gamma2[a] for a in atoms})


def black_snapshot(sigma=0.0156):
    futures, quotes = {}, []
    for lab, F in [("Apr/18", 36.0), ("Jul/18", 40.0)]:
        per = period_from_label(lab, REF)
        futures[lab] = (per, F)
        T = per.start - 3
        for K in np.arange(math.ceil(0.9 * F), math.floor(1.1 * F) + 1.0):
            quotes.append(OptionQuote(lab, per, T, float(K), float(black_call(F, K, sigma, T))))
    return MarketSnapshot(REF, futures, tuple(quotes))


class TestParameterVector:
    @given(st.floats(0.01, 5.0), st.floats(-0.99, 0.99), st.floats(1e-5, 0.1), st.floats(-0.99, 0.99),
           st.floats(1e-3, 1.0), st.floats(1e-4, 0.1), st.lists(st.floats(1e-4, 0.1), min_size=3, max_size=3))
    @settings(max_examples=60)
    def test_round_trip(self, a1, r1, a2, r2, g1, mu, g2):
        atoms = [period_from_label(x, REF) for x in LABELS[:3]]
        p = TwoFactorParams(a1, a1 * r1, a2, a2 * r2, g1, mu, dict(zip(atoms, g2)))
        q = decode(encode(p, atoms), atoms)
        for name in ("alpha1", "beta1", "alpha2", "beta2", "gamma1", "mu"):
            assert getattr(q, name) == pytest.approx(getattr(p, name), rel=1e-12, abs=1e-15)
        for a in atoms:
            assert q.gamma2[a] == pytest.approx(p.gamma2[a], rel=1e-12)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=9, max_size=9))
    def test_decode_always_feasible(self, x):
        atoms = [period_from_label(y, REF) for y in LABELS[:3]]
        p = decode(np.array(x), atoms)
        assert abs(p.beta1) < p.alpha1 and abs(p.beta2) < p.alpha2

    def test_one_factor_vector(self, truth, atoms):
        x = encode(truth, atoms, "one_factor")
        assert x.size == 2 + len(atoms)
        p = decode(x, atoms, "one_factor")
        assert p.gamma1 == 0.0 and p.alpha2 == pytest.approx(truth.alpha2)

    def test_composite_never_free(self, small_snapshot, atoms, truth):
        q2 = small_snapshot.period("Q2/18")
        assert q2 not in atoms
        p = decode(encode(truth, atoms), atoms)
        assert gamma2_composite(p.gamma2, small_snapshot.decomp, q2) == pytest.approx(
            (30 * 0.0129 + 31 * 0.0054 + 30 * 0.0060) / 91, rel=1e-12)


class TestObjectives:
    def test_zero_at_truth(self, small_snapshot, truth, atoms):
        x = encode(truth, atoms)
        assert objective_price(x, small_snapshot, CalibrationConfig()) < 1e-12
        assert objective_iv(x, small_snapshot, CalibrationConfig(objective="iv")) < 1e-10

    def test_gamma2_bump_increases(self, small_snapshot, truth, atoms):
        x = encode(truth, atoms)
        base = objective_price(x, small_snapshot, CalibrationConfig())
        y = x.copy()
        y[6] += math.log(1.1)
        assert objective_price(y, small_snapshot, CalibrationConfig()) > base
        assert objective_iv(y, small_snapshot, CalibrationConfig()) > objective_iv(x, small_snapshot, CalibrationConfig())

    def test_single_contract_reduction(self, small_snapshot, truth, atoms):
        x = encode(truth, atoms)
        y = x.copy()
        y[6] += 0.2
        p = decode(y, atoms)
        one = MarketSnapshot(REF, {"Apr/18": small_snapshot.futures["Apr/18"]},
                             tuple(q for q in small_snapshot.options if q.underlying_label == "Apr/18"))
        contracts = cal._contracts(one)
        direct = cal.model_prices(p, contracts, one.decomp, CalibrationConfig().grid)[0] - contracts[0].prices
        got = objective_price(encode(p.replace(gamma2={one.period("Apr/18"): p.gamma2[atoms[0]]}),
                                     cal.atomic_periods(one)), one, CalibrationConfig())
        assert got == pytest.approx(float(direct @ direct), rel=1e-12)

    def test_pricing_failure_scores_sentinel(self, small_snapshot, truth, atoms, monkeypatch, caplog):
        def boom(*a, **k):
            raise QuadratureError("forced")

        monkeypatch.setattr(cal, "call_price", boom)
        with caplog.at_level("DEBUG", logger="voltsmile.calibration"):
            assert objective_price(encode(truth, atoms), small_snapshot, CalibrationConfig()) == cal.SENTINEL
        assert "forced" in caplog.text

    def test_out_of_band_price_penalised(self, small_snapshot, truth, atoms, monkeypatch):
        monkeypatch.setattr(cal, "call_price", lambda K, F, cf, grid: np.zeros(np.shape(K)))
        cfg = CalibrationConfig(objective="iv", penalty_weight=2.0)
        assert objective_iv(encode(truth, atoms), small_snapshot, cfg) == pytest.approx(2.0 * len(small_snapshot.options))


class TestCalibrate:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            CalibrationConfig(model_kind="three_factor")
        with pytest.raises(ValueError):
            CalibrationConfig(optimizer_budget=0)
        with pytest.raises(ValueError):
            CalibrationConfig(multistart=0)

    def test_empty_snapshot(self, small_snapshot):
        with pytest.raises(CalibrationError):
            calibrate(MarketSnapshot(REF, small_snapshot.futures), CalibrationConfig())

    def test_black_recovers_sigma(self):
        snap = black_snapshot()
        for obj in ("price", "iv"):
            res = calibrate(snap, CalibrationConfig(model_kind="black", objective=obj))
            for s in res.params.values():
                assert s == pytest.approx(0.0156, abs=1e-6)

    def test_black_iv_optimum_is_mean_iv(self, small_snapshot):
        res = calibrate(small_snapshot, CalibrationConfig(model_kind="black", objective="iv"))
        c = cal._contracts(small_snapshot)[0]
        assert res.params["Apr/18"] == pytest.approx(float(np.mean(c.ivs)), rel=1e-14)

    def test_two_factor_from_perturbed_start(self, small_snapshot, truth, atoms, euler_grid):
        x = encode(truth, atoms) * 1.0
        start = decode(x + 0.15 * np.cos(np.arange(x.size)), atoms)
        res = calibrate(small_snapshot, CalibrationConfig(grid=euler_grid, start=start, optimizer_budget=1500))
        assert max(res.rmse_price.values()) < 1e-4
        assert res.converged
        again = objective_price(encode(res.params, atoms), small_snapshot, CalibrationConfig(grid=euler_grid))
        assert again == pytest.approx(res.objective, abs=1e-12)

    def test_deterministic(self, small_snapshot, euler_grid):
        cfg = CalibrationConfig(grid=euler_grid, optimizer_budget=200, multistart=2, seed=3, polish=False)
        a, b = calibrate(small_snapshot, cfg), calibrate(small_snapshot, cfg)
        assert a.objective == b.objective and a.params == b.params and a.trace == b.trace

    def test_multistart_monotone(self, small_snapshot, euler_grid):
        vals = [calibrate(small_snapshot, CalibrationConfig(grid=euler_grid, optimizer_budget=150, multistart=k,
                                                            seed=11, polish=False)).objective
                for k in (1, 2, 3)]
        assert vals[0] >= vals[1] >= vals[2]

    def test_one_factor_not_better(self, small_snapshot, truth, euler_grid):
        two = calibrate(small_snapshot, CalibrationConfig(grid=euler_grid, start=truth, optimizer_budget=300))
        one = calibrate(small_snapshot, CalibrationConfig(model_kind="one_factor", grid=euler_grid,
                                                          optimizer_budget=600))
        assert one.objective > two.objective

    def test_noa_violation_warns(self, small_snapshot, euler_grid):
        fut = dict(small_snapshot.futures)
        per, px = fut["Q2/18"]
        fut["Q2/18"] = (per, px + 1.0)
        snap = MarketSnapshot(REF, fut, small_snapshot.options)
        with pytest.warns(UserWarning, match="Q2/18"):
            calibrate(snap, CalibrationConfig(model_kind="black"))


class TestReport:
    def test_rows_and_columns(self, small_snapshot, truth):
        res = cal.CalibrationResult("two_factor", truth, 0.0, {}, {}, 0, True)
        black = calibrate(small_snapshot, CalibrationConfig(model_kind="black"))
        rows = fit_report([res, black], small_snapshot)
        assert len(rows) == 2 * len(small_snapshot.options)
        assert set(rows[0]) == set(cal.REPORT_FIELDS)
        for lab in LABELS:
            ivs = {r["model_iv"] for r in rows if r["model"] == "black" and r["contract"] == lab}
            assert max(ivs) - min(ivs) < 1e-9

    def test_forward_skew_front_month(self, small_snapshot, truth):
        res = cal.CalibrationResult("two_factor", truth, 0.0, {}, {}, 0, True)
        rows = [r for r in fit_report(res, small_snapshot) if r["contract"] == "Apr/18"]
        F = small_snapshot.forward("Apr/18")
        lo = min(rows, key=lambda r: abs(r["strike"] - 0.9 * F))
        hi = min(rows, key=lambda r: abs(r["strike"] - 1.1 * F))
        assert hi["model_iv"] > lo["model_iv"]
