import datetime as dt

import numpy as np
import pytest

from robustfolio.backtest import (
    BacktestError,
    BacktestReport,
    PeriodResult,
    Slot,
    aggregate_metrics,
    composition_metrics,
    cvar_label,
    metric_rows,
    panel_digest,
    period_seed,
    report_from_json,
    report_to_json,
    run_backtest,
)
from robustfolio.config import RunConfig
from robustfolio.market_data import InsufficientHistoryError, ReturnsPanel, synth_panel
from robustfolio.metrics import MetricConfig
from robustfolio.models import ModelError


def _cfg(**kw):
    base = dict(
        horizon=100,
        holding=50,
        n_points=3,
        seed=0,
        bootstrap_draws=25,
        bootstrap_block=20,
    )
    base.update(kw)
    return RunConfig(**base)


def _panel(seed=0, rows=260, assets=3):
    return synth_panel(seed, rows, assets)


def _hand_panel(values):
    values = np.asarray(values, dtype=float)
    dates = tuple(
        dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(values.shape[0])
    )
    names = tuple(f"A{j}" for j in range(values.shape[1]))
    return ReturnsPanel(dates=dates, assets=names, values=values)


class TestRunBacktest:
    def test_period_count_and_layout(self):
        report = run_backtest(_panel(), "mv", _cfg())
        # (260 - 100) // 50 = 3 periods
        assert len(report.periods) == 3
        for k, period in enumerate(report.periods):
            assert period.index == k
            assert period.in_sample == (k * 50, k * 50 + 100)
            assert period.out_sample == (k * 50 + 100, k * 50 + 150)
            assert not period.carried
            assert len(period.slots) == 3
            for slot in period.held:
                assert slot.weights.shape == (3,)
                assert slot.in_series.shape == (100,)
                assert slot.out_series.shape == (50,)
        assert report.model_id == "mv"
        assert report.horizon == 100
        assert report.holding == 50
        assert report.assets == _panel().assets

    def test_no_lookahead(self):
        base = _panel(seed=3)
        tampered_values = base.values.copy()
        tampered_values[-50:] *= -3.0  # only the final out-of-sample block
        tampered = ReturnsPanel(base.dates, base.assets, tampered_values)
        a = run_backtest(base, "mv", _cfg())
        b = run_backtest(tampered, "mv", _cfg())
        for pa, pb in zip(a.periods, b.periods):
            for sa, sb in zip(pa.slots, pb.slots):
                np.testing.assert_array_equal(sa.weights, sb.weights)
        # but the realised out-of-sample series of the last period does change
        assert not np.array_equal(
            a.periods[-1].slots[0].out_series, b.periods[-1].slots[0].out_series
        )

    def test_determinism(self):
        a = run_backtest(_panel(seed=5), "mv", _cfg())
        b = run_backtest(_panel(seed=5), "mv", _cfg())
        assert report_to_json(a) == report_to_json(b)

    def test_mixture_model_runs(self):
        cfg = _cfg(mixture_components=2, n_points=2)
        report = run_backtest(_panel(seed=11), "wcvar", cfg)
        assert any(p.held for p in report.periods)

    def test_unknown_model(self):
        with pytest.raises(ModelError, match="unknown model"):
            run_backtest(_panel(), "bogus", _cfg())

    def test_insufficient_history(self):
        with pytest.raises(InsufficientHistoryError):
            run_backtest(_panel(rows=120), "mv", _cfg())


class TestCarryForward:
    def _two_regime_panel(self):
        # rows 0..100 drift upward; rows 100..150 crash hard enough that the
        # second window's sample means all go negative
        rng = np.random.default_rng(8)
        noise = rng.normal(0.0, 0.004, size=(200, 2))
        values = noise - noise.mean(axis=0)
        values[:100] += 0.002
        values[100:150] -= 0.02
        values[150:] += 0.002
        return _hand_panel(values)

    def test_failed_period_carries_previous_weights(self):
        panel = self._two_regime_panel()
        report = run_backtest(panel, "or", _cfg(n_points=1))
        assert len(report.periods) == 2
        first, second = report.periods
        assert not first.carried
        assert second.carried
        assert second.skipped and "every frontier point failed" in second.skipped[0][1]
        np.testing.assert_array_equal(second.slots[0].weights, first.slots[0].weights)
        # series are recomputed on the new window, not copied
        lo, hi = second.in_sample
        np.testing.assert_allclose(
            second.slots[0].in_series, panel.values[lo:hi] @ first.slots[0].weights
        )

    def test_first_period_failure_leaves_empty_slots(self):
        # windows overlap (rows 50..100 belong to both), so the crash must sit
        # entirely in the first half: window 0 averages negative, window 1
        # (rows 50..150) averages positive
        rng = np.random.default_rng(21)
        noise = rng.normal(0.0, 0.02, size=(200, 2))
        values = noise - noise.mean(axis=0)
        values[:50] -= 0.02
        values[50:] += 0.012
        report = run_backtest(_hand_panel(values), "or", _cfg(n_points=1))
        assert report.periods[0].carried
        assert report.periods[0].slots == ()
        assert report.periods[1].held

    def test_all_periods_failing_raises(self):
        rng = np.random.default_rng(34)
        noise = rng.normal(0.0, 0.004, size=(160, 2))
        values = noise - noise.mean(axis=0) - 0.01
        with pytest.raises(BacktestError, match="every period failed"):
            run_backtest(_hand_panel(values), "or", _cfg(n_points=1))


class TestSerialization:
    def test_round_trip_is_byte_identical(self):
        report = run_backtest(_panel(seed=7), "mv", _cfg())
        text = report_to_json(report)
        again = report_to_json(report_from_json(text))
        assert text == again

    def test_round_trip_preserves_structure(self):
        report = run_backtest(_panel(seed=7), "cvar", _cfg())
        back = report_from_json(report_to_json(report))
        assert back.model_id == report.model_id
        assert back.assets == report.assets
        assert back.panel_sha256 == report.panel_sha256
        assert len(back.periods) == len(report.periods)
        for pa, pb in zip(report.periods, back.periods):
            assert pa.in_sample == pb.in_sample
            assert pa.skipped == pb.skipped
            for sa, sb in zip(pa.slots, pb.slots):
                np.testing.assert_array_equal(sa.weights, sb.weights)
                np.testing.assert_array_equal(sa.out_series, sb.out_series)

    def test_unknown_format_rejected(self):
        report = run_backtest(_panel(seed=7), "mv", _cfg())
        text = report_to_json(report).replace("robustfolio.backtest/1", "mystery/9")
        with pytest.raises(ValueError, match="format"):
            report_from_json(text)

    def test_carried_flag_survives(self):
        rng = np.random.default_rng(8)
        noise = rng.normal(0.0, 0.004, size=(200, 2))
        values = noise - noise.mean(axis=0)
        values[:100] += 0.002
        values[100:150] -= 0.02
        report = run_backtest(_hand_panel(values), "or", _cfg(n_points=1))
        back = report_from_json(report_to_json(report))
        assert [p.carried for p in back.periods] == [False, True]
        assert np.isnan(back.periods[1].skipped[0][0])


class TestSeeds:
    def test_period_seed_matches_seed_sequence(self):
        for seed, period in [(0, 0), (0, 1), (7, 3), (123, 40)]:
            expect = int(
                np.random.SeedSequence(seed, spawn_key=(period,)).generate_state(
                    1, dtype=np.uint64
                )[0]
            )
            assert period_seed(seed, period) == expect

    def test_period_seeds_distinct(self):
        seeds = {period_seed(0, k) for k in range(50)}
        assert len(seeds) == 50

    def test_config_records_seed(self):
        report = run_backtest(_panel(), "mv", _cfg(seed=42))
        assert report.config["seed"] == 42


class TestDigest:
    def test_stable(self):
        p = _panel(seed=2)
        assert panel_digest(p) == panel_digest(p)

    def test_sensitive_to_values_names_dates(self):
        p = _panel(seed=2)
        base = panel_digest(p)
        bumped = p.values.copy()
        bumped[0, 0] += 1e-12
        assert panel_digest(ReturnsPanel(p.dates, p.assets, bumped)) != base
        renamed = tuple(a + "X" for a in p.assets)
        assert panel_digest(ReturnsPanel(p.dates, renamed, p.values)) != base
        shifted = tuple(d + dt.timedelta(days=1) for d in p.dates)
        assert panel_digest(ReturnsPanel(shifted, p.assets, p.values)) != base


def _report_with_series(in_series, out_series, weights=(0.5, 0.5)):
    slot = Slot(
        param=1.0,
        weights=np.asarray(weights, dtype=float),
        in_series=np.asarray(in_series, dtype=float),
        out_series=np.asarray(out_series, dtype=float),
    )
    period = PeriodResult(
        index=0,
        in_sample=(0, len(slot.in_series)),
        out_sample=(len(slot.in_series), len(slot.in_series) + len(slot.out_series)),
        slots=(slot,),
        skipped=(),
        carried=False,
    )
    return BacktestReport(
        model_id="mv",
        assets=("A", "B"),
        horizon=len(slot.in_series),
        holding=len(slot.out_series),
        config={},
        panel_sha256="0" * 64,
        periods=(period,),
    )


class TestAggregation:
    def test_table_shape_and_finiteness(self):
        report = run_backtest(_panel(seed=9), "mv", _cfg())
        tables = aggregate_metrics(report)
        assert set(tables) == {"in_sample", "out_sample"}
        expected_rows = [
            "mean_return", "std_dev", "sharpe", "sortino", "omega",
            "cvar_90", "cvar_95", "cvar_99",
        ]
        for side in tables.values():
            assert list(side) == expected_rows
            for row, value in side.items():
                assert np.isfinite(value), row

    def test_average_over_cells(self):
        rng = np.random.default_rng(14)
        series = rng.normal(0.0, 0.01, size=40)
        report = _report_with_series(series, series)
        tables = aggregate_metrics(report)
        assert tables["in_sample"]["mean_return"] == pytest.approx(series.mean())
        assert tables["in_sample"]["std_dev"] == pytest.approx(series.std(ddof=1))
        assert tables["in_sample"] == tables["out_sample"]

    def test_undefined_ratio_averages_to_nan(self):
        # an all-positive out-of-sample leg has no downside: sortino and omega
        # are undefined in every cell, so their aggregate is NaN
        rng = np.random.default_rng(15)
        in_series = rng.normal(0.0, 0.01, size=40)
        report = _report_with_series(in_series, np.full(30, 0.01))
        tables = aggregate_metrics(report)
        assert np.isnan(tables["out_sample"]["sortino"])
        assert np.isnan(tables["out_sample"]["omega"])
        assert np.isfinite(tables["out_sample"]["mean_return"])
        assert np.isfinite(tables["in_sample"]["sortino"])

    def test_single_row_series_has_nan_dispersion(self):
        report = _report_with_series([0.01, -0.02], [0.05])
        tables = aggregate_metrics(report)
        assert np.isnan(tables["out_sample"]["std_dev"])
        assert np.isnan(tables["out_sample"]["sharpe"])

    def test_custom_betas_change_rows(self):
        report = _report_with_series([0.01, -0.02, 0.005], [0.01, -0.01])
        mcfg = MetricConfig(betas=(0.5, 0.975))
        tables = aggregate_metrics(report, mcfg)
        assert "cvar_50" in tables["in_sample"]
        assert "cvar_97_5" in tables["in_sample"]

    def test_cvar_rows_monotone_in_beta(self):
        report = run_backtest(_panel(seed=16), "mv", _cfg())
        side = aggregate_metrics(report)["in_sample"]
        assert side["cvar_90"] <= side["cvar_95"] <= side["cvar_99"]


class TestCvarLabel:
    def test_labels(self):
        assert cvar_label(0.95) == "cvar_95"
        assert cvar_label(0.9) == "cvar_90"
        assert cvar_label(0.975) == "cvar_97_5"

    def test_metric_rows_order(self):
        rows = metric_rows(MetricConfig())
        assert rows[:5] == ["mean_return", "std_dev", "sharpe", "sortino", "omega"]
        assert rows[5:] == ["cvar_90", "cvar_95", "cvar_99"]


class TestComposition:
    def _two_period_report(self, w0, w1, second_slot=True):
        def slot(w):
            w = np.asarray(w, dtype=float)
            return Slot(param=1.0, weights=w, in_series=np.zeros(4), out_series=np.zeros(2))

        p0 = PeriodResult(0, (0, 4), (4, 6), (slot(w0), slot([0.9, 0.1])), (), False)
        second = (slot(w1), slot([0.8, 0.2]) if second_slot else None)
        p1 = PeriodResult(1, (2, 6), (6, 8), second, (), False)
        return BacktestReport("mv", ("A", "B"), 4, 2, {}, "0" * 64, (p0, p1))

    def test_turnover_pairs_matching_slots(self):
        report = self._two_period_report([1.0, 0.0], [0.0, 1.0])
        comp = composition_metrics(report)
        # pairs: slot0 (1,0)->(0,1) = 2, slot1 (0.9,.1)->(0.8,.2) = 0.2
        assert comp["turnover"] == pytest.approx((2.0 + 0.2) / 2.0)

    def test_none_slots_skip_the_pair(self):
        report = self._two_period_report([1.0, 0.0], [0.0, 1.0], second_slot=False)
        comp = composition_metrics(report)
        assert comp["turnover"] == pytest.approx(2.0)

    def test_held_and_concentration(self):
        report = self._two_period_report([0.5, 0.5], [1.0, 0.0])
        comp = composition_metrics(report)
        # held slots: (0.5,0.5), (0.9,0.1), (1,0), (0.8,0.2)
        assert comp["assets_held"] == pytest.approx((2 + 2 + 1 + 2) / 4.0)
        assert comp["diversification"] == pytest.approx(
            np.mean([0.5, 0.82, 1.0, 0.68])
        )

    def test_empty_report_gives_nans(self):
        report = BacktestReport("mv", ("A",), 4, 2, {}, "0" * 64, ())
        comp = composition_metrics(report)
        assert all(np.isnan(v) for v in comp.values())
