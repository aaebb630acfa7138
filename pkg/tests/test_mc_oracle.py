import math

import numpy as np
import pytest

from voltsmile import mc_oracle
from voltsmile.forward_model import TwoFactorCF, atomic_decomposition, period_from_label
from voltsmile.fourier_pricer import call_price
from voltsmile.mc_oracle import McConfig, mc_call_price, simulate_terminal
from voltsmile.published import CONTRACT_LABELS, VALUATION_DATE

REF = VALUATION_DATE


@pytest.fixture(scope="module")
def decomp():
    return atomic_decomposition(period_from_label(x, REF) for x in CONTRACT_LABELS)


class TestSimulation:
    @pytest.mark.parametrize("label", ["Apr/18", "Q2/18", "Cal-19"])
    def test_martingale_and_variance(self, table2, decomp, label):
        per = period_from_label(label, REF)
        T = per.start - 3
        z = simulate_terminal(table2, 0.0, T, per, decomp, McConfig(n_paths=400_000, seed=1, scheme="midpoint"))
        var = TwoFactorCF(table2, 0.0, T, per, decomp).variance
        assert abs(z.mean()) < 3 * math.sqrt(var / z.size)
        # the second driver is very heavy tailed, so bound the sample variance
        # by its own standard error (from the sample fourth moment)
        m4 = np.mean((z - z.mean()) ** 4)
        assert abs(z.var() - var) < 4 * math.sqrt((m4 - z.var() ** 2) / z.size)

    def test_deterministic_across_thread_counts(self, table2, decomp, monkeypatch):
        per = period_from_label("Apr/18", REF)
        cfg = McConfig(n_paths=300_000, n_steps=8, seed=42)
        monkeypatch.setenv("VOLTSMILE_THREADS", "1")
        a = simulate_terminal(table2, 0.0, 24.0, per, decomp, cfg)
        monkeypatch.setenv("VOLTSMILE_THREADS", "4")
        b = simulate_terminal(table2, 0.0, 24.0, per, decomp, cfg)
        np.testing.assert_array_equal(a, b)
        assert a.size == 300_000

    def test_seed_changes_paths(self, table2, decomp):
        per = period_from_label("Apr/18", REF)
        a = simulate_terminal(table2, 0.0, 24.0, per, decomp, McConfig(n_paths=1000, seed=1))
        b = simulate_terminal(table2, 0.0, 24.0, per, decomp, McConfig(n_paths=1000, seed=2))
        assert not np.array_equal(a, b)

    def test_validation(self, table2, decomp):
        per = period_from_label("Apr/18", REF)
        with pytest.raises(ValueError):
            McConfig(n_paths=0)
        with pytest.raises(ValueError):
            McConfig(scheme="right")
        with pytest.raises(ValueError):
            simulate_terminal(table2, 5.0, 5.0, per, decomp, McConfig(n_paths=10))
        with pytest.raises(ValueError):
            simulate_terminal(table2, 0.0, 40.0, per, decomp, McConfig(n_paths=10))


class TestPricing:
    def test_agrees_with_fourier(self, table2, decomp):
        per = period_from_label("May/18", REF)
        T, F = per.start - 3, 33.5
        K = np.array([31.0, 33.5, 36.0])
        mc, se = mc_call_price(K, table2, 0.0, T, per, decomp, McConfig(n_paths=500_000, seed=9, scheme="midpoint"), F)
        ref = call_price(K, F, TwoFactorCF(table2, 0.0, T, per, decomp))
        assert np.all(np.abs(mc - ref) < 4 * se)

    def test_scalar_strike(self, table2, decomp):
        per = period_from_label("Apr/18", REF)
        price, se = mc_call_price(36.0, table2, 0.0, 24.0, per, decomp, McConfig(n_paths=10_000), 36.0)
        assert isinstance(price, float) and se > 0

    def test_batches_cover_remainder(self, table2, decomp, monkeypatch):
        monkeypatch.setattr(mc_oracle, "BATCH", 1000)
        per = period_from_label("Apr/18", REF)
        z = simulate_terminal(table2, 0.0, 24.0, per, decomp, McConfig(n_paths=2500, seed=3))
        assert z.size == 2500
