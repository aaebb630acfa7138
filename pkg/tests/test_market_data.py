import logging

import numpy as np
import pytest

from voltsmile.forward_model import noa_check, period_from_label
from voltsmile.market_data import (InputError, MarketSnapshot, OptionQuote, SyntheticContract, filter_strikes,
                                   load_futures, load_options, load_snapshot, published_contracts, save_snapshot,
                                   synthetic_market)
from voltsmile.published import CONTRACT_LABELS, VALUATION_DATE

REF = VALUATION_DATE


def write(path, text):
    path.write_text(text)
    return path


class TestLoading:
    def test_fixture_files(self, data_dir):
        snap = load_snapshot(data_dir / "futures_2018-03-05.csv", data_dir / "options_two_factor_2018-03-05.csv", REF)
        assert list(snap.futures) == list(CONTRACT_LABELS)
        assert len(snap.options) == 113
        assert snap.period("Apr/18") == period_from_label("Apr/18", REF)
        assert noa_check(snap, 1e-12) == []

    def test_options_optional(self, data_dir):
        snap = load_snapshot(data_dir / "futures_2018-03-05.csv", None, REF)
        assert snap.options == ()

    def test_header_checked(self, tmp_path):
        p = write(tmp_path / "f.csv", "name,start,end,price\n")
        with pytest.raises(InputError, match="expected header"):
            load_futures(p, REF)

    def test_errors_collected_with_line_numbers(self, tmp_path):
        p = write(tmp_path / "f.csv", "label,delivery_start,delivery_end,price\n"
                  "Apr/18,2018-04-01,2018-04-29,36\n"
                  "May/18,2018-05-01,2018-05-31,x\n"
                  "Foo,2018-05-01,2018-05-31,1\n")
        with pytest.raises(InputError) as exc:
            load_futures(p, REF)
        msg = str(exc.value)
        assert "f.csv:2" in msg and "f.csv:3" in msg and "f.csv:4" in msg

    def test_duplicate_futures(self, tmp_path):
        p = write(tmp_path / "f.csv", "label,delivery_start,delivery_end,price\n"
                  "Apr/18,2018-04-01,2018-04-30,36\nApr/18,2018-04-01,2018-04-30,37\n")
        with pytest.raises(InputError, match="duplicate"):
            load_futures(p, REF)

    @pytest.mark.parametrize("row,msg", [
        ("Nov/18,2018-03-29,36,1.0", "missing underlying"),
        ("Apr/18,2018-03-29,-1,1.0", "strike must be positive"),
        ("Apr/18,2018-04-10,36,1.0", "after start of delivery"),
    ])
    def test_option_errors(self, tmp_path, data_dir, row, msg):
        fut = load_futures(data_dir / "futures_2018-03-05.csv", REF)
        p = write(tmp_path / "o.csv", "underlying_label,exercise_date,strike,settlement_price\n" + row + "\n")
        with pytest.raises(InputError, match=msg):
            load_options(p, fut, REF)

    def test_duplicate_option(self, tmp_path, data_dir):
        fut = load_futures(data_dir / "futures_2018-03-05.csv", REF)
        p = write(tmp_path / "o.csv", "underlying_label,exercise_date,strike,settlement_price\n"
                  "Apr/18,2018-03-29,36,1.0\nApr/18,2018-03-29,36,1.1\n")
        with pytest.raises(InputError, match="duplicate quote"):
            load_options(p, fut, REF)

    def test_save_load_round_trip(self, tmp_path, synthetic_snapshot):
        f, o = tmp_path / "f.csv", tmp_path / "o.csv"
        save_snapshot(synthetic_snapshot, f, o)
        back = load_snapshot(f, o, REF)
        assert back.futures == synthetic_snapshot.futures
        assert back.options == synthetic_snapshot.options


class TestSnapshot:
    def test_contracts_grouped_in_listing_order(self, synthetic_snapshot):
        groups = synthetic_snapshot.contracts()
        assert [g[0] for g in groups] == list(CONTRACT_LABELS)
        for _, T, quotes in groups:
            ks = [q.strike for q in quotes]
            assert ks == sorted(ks)
            assert all(q.exercise_day == T for q in quotes)

    def test_quote_validation(self):
        per = period_from_label("Apr/18", REF)
        with pytest.raises(ValueError):
            OptionQuote("Apr/18", per, 24, 0.0, 1.0)
        with pytest.raises(ValueError):
            OptionQuote("Apr/18", per, 24, 36.0, -1.0)

    def test_unknown_underlying(self):
        per = period_from_label("Apr/18", REF)
        with pytest.raises(ValueError):
            MarketSnapshot(REF, {}, (OptionQuote("Apr/18", per, 24, 36.0, 1.0),))


class TestFilter:
    def test_band_inclusive(self, synthetic_snapshot):
        out = filter_strikes(synthetic_snapshot, 0.95, 1.05)
        for q in out.options:
            F = out.forward(q.underlying_label)
            assert 0.95 * F * (1 - 1e-12) <= q.strike <= 1.05 * F * (1 + 1e-12)
        assert 0 < len(out.options) < len(synthetic_snapshot.options)

    def test_dropped_contract_logged(self, synthetic_snapshot, caplog):
        with caplog.at_level(logging.WARNING):
            out = filter_strikes(synthetic_snapshot, 0.999, 1.0001)
        assert "dropped" in caplog.text
        assert len({q.underlying_label for q in out.options}) < 14

    def test_bad_band(self, synthetic_snapshot):
        with pytest.raises(ValueError):
            filter_strikes(synthetic_snapshot, 1.1, 0.9)


class TestSynthetic:
    def test_ladder(self):
        c = SyntheticContract("Apr/18", 36.0)
        np.testing.assert_array_equal(c.ladder(36.0), np.arange(33.0, 39.0 + 0.5, 1.0))
        assert list(SyntheticContract("Apr/18", 36.0, strikes=(35.0, 36.5)).ladder(36.0)) == [35.0, 36.5]

    def test_published_snapshot_shape(self, synthetic_snapshot):
        snap = synthetic_snapshot
        assert len(snap.options) == 113
        q2 = snap.forward("Q2/18")
        assert q2 == pytest.approx((30 * 36.0 + 31 * 33.5 + 30 * 35.0) / 91, rel=1e-15)
        for q in snap.options:
            assert q.exercise_day == q.delivery.start - 3

    def test_noise_is_seeded(self, table2):
        contracts = published_contracts()[:2]
        a = synthetic_market(table2, contracts, REF, noise=1e-3, seed=5)
        b = synthetic_market(table2, contracts, REF, noise=1e-3, seed=5)
        c = synthetic_market(table2, contracts, REF)
        assert a.options == b.options
        assert a.options != c.options
