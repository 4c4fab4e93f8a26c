from dataclasses import replace

import numpy as np
import pytest

from revcast import data as D
from revcast import synthgen as S
from revcast.errors import ConfigError, ContractError

from oracles import np_autocorrelation

QUIET = S.GeneratorSpec(
    n_publishers=4, n_categories=2, n_days=120,
    base_spread=0.0, weekly_amplitude=0.0, annual_amplitude=0.0,
    category_strength=0.0, noise_std=0.0, ctr_std=0.0, cpc_std=0.0,
    seed=7,
)


class TestGeneratorSpec:
    def test_too_few_days_rejected(self):
        with pytest.raises(ConfigError, match="n_days"):
            S.GeneratorSpec(n_days=50)

    def test_invalid_probability_rejected(self):
        with pytest.raises(ConfigError):
            S.GeneratorSpec(zero_prob=1.5)

    def test_invalid_ar_coeff_rejected(self):
        with pytest.raises(ConfigError):
            S.GeneratorSpec(ar_coeff=1.0)

    def test_nonstationary_ar_combination_rejected(self):
        with pytest.raises(ConfigError, match="stationarity"):
            S.GeneratorSpec(ar_coeff=0.8, weekly_ar_coeff=0.3)

    def test_weekly_ar_strengthens_lag_seven(self):
        flat = S.GeneratorSpec(seed=21, weekly_amplitude=0.0, annual_amplitude=0.0,
                               weekly_ar_coeff=0.0)
        weekly = S.GeneratorSpec(seed=21, weekly_amplitude=0.0, annual_amplitude=0.0,
                                 weekly_ar_coeff=0.35)
        def lag7(spec):
            panel = S.generate_panel(spec)
            return np.mean([np_autocorrelation(np.log1p(p.metrics["revenue"]), 7) for p in panel])
        assert lag7(weekly) > lag7(flat) + 0.05


class TestGeneratePanel:
    def test_category_factor_alone_makes_category_mates_identical(self):
        spec = replace(QUIET, category_strength=1.0)
        panel = S.generate_panel(spec)
        by_category = {}
        for pub in panel:
            by_category.setdefault(pub.category, []).append(pub.metrics["impressions"])
        for series_list in by_category.values():
            for series in series_list[1:]:
                assert np.array_equal(series, series_list[0])
        c1, c2 = (by_category[c][0] for c in sorted(by_category))
        assert not np.array_equal(c1, c2)

    def test_all_variation_off_gives_constant_revenue(self):
        panel = S.generate_panel(QUIET)
        for pub in panel:
            revenue = pub.metrics["revenue"]
            assert np.all(revenue == revenue[0])
            assert revenue[0] > 0

    def test_default_spec_weekly_autocorrelation_dominates(self):
        panel = S.generate_panel(S.GeneratorSpec(seed=42))
        lag7 = np.mean([np_autocorrelation(p.metrics["revenue"], 7) for p in panel])
        lag4 = np.mean([np_autocorrelation(p.metrics["revenue"], 4) for p in panel])
        assert lag7 > lag4

    def test_revenue_identity_exact(self):
        spec = S.GeneratorSpec(n_publishers=5, n_days=200, zero_prob=0.05, seed=3)
        panel, processes = S.generate_panel(spec, return_processes=True)
        for pub in panel:
            cpc = processes[pub.publisher_id]["cpc"]
            assert np.array_equal(pub.metrics["revenue"], pub.metrics["clicks"] * cpc)

    def test_counts_are_nonnegative_integers_and_clicks_bounded(self):
        panel = S.generate_panel(S.GeneratorSpec(seed=11, zero_prob=0.02))
        for pub in panel:
            for col in ("impressions", "clicks", "page_views", "sessions", "bounces"):
                values = pub.metrics[col]
                assert np.all(values >= 0)
                assert np.array_equal(values, np.round(values))
            assert np.all(pub.metrics["clicks"] <= pub.metrics["impressions"])

    def test_fixed_seed_bit_identical(self):
        spec = S.GeneratorSpec(seed=9)
        a = S.generate_panel(spec)
        b = S.generate_panel(spec)
        for pid in a.publishers:
            for col, values in a.publishers[pid].metrics.items():
                assert values.tobytes() == b.publishers[pid].metrics[col].tobytes()

    def test_zero_dropout_produces_zero_revenue_days(self):
        panel = S.generate_panel(S.GeneratorSpec(seed=5, zero_prob=0.1))
        zero_days = sum(int((p.metrics["revenue"] == 0).sum()) for p in panel)
        assert zero_days > 0

    def test_panel_feeds_data_pipeline(self, tmp_path):
        panel = S.generate_panel(S.GeneratorSpec(n_publishers=3, n_days=150, seed=1))
        path = tmp_path / "synth.csv"
        D.export_csv(panel, path)
        reread = D.ingest_csv(path)
        assert len(reread) == 3
        filtered = D.filter_publishers(reread)
        assert len(filtered) == 3  # defaults generate comfortably above $5/day

    def test_distractor_column_is_noise(self):
        panel = S.generate_panel(S.GeneratorSpec(seed=13))
        for pub in panel:
            imps = pub.metrics["impressions"]
            bounces = pub.metrics["bounces"]
            r = np.corrcoef(imps, bounces)[0, 1]
            assert abs(r) < 0.25

    def test_distractor_disabled_tracks_traffic(self):
        panel = S.generate_panel(S.GeneratorSpec(seed=13, distractor_column=None))
        correlations = [
            np.corrcoef(p.metrics["impressions"], p.metrics["bounces"])[0, 1] for p in panel
        ]
        assert np.mean(correlations) > 0.8


class TestSeasonalNaive:
    def test_periodic_history_gives_zero_error(self):
        history = np.tile([1.0, 2, 3, 4, 5, 6, 7], 4)
        forecast = S.seasonal_naive_forecast(history, tau=14)
        assert np.array_equal(forecast, np.tile([1.0, 2, 3, 4, 5, 6, 7], 2))

    def test_tau_seven_returns_last_week_in_order(self):
        history = np.arange(20.0)
        assert np.array_equal(S.seasonal_naive_forecast(history, tau=7), np.arange(13.0, 20.0))

    def test_matches_index_arithmetic_oracle(self):
        rng = np.random.default_rng(8)
        history = rng.normal(size=31)
        tau, period = 10, 7
        forecast = S.seasonal_naive_forecast(history, tau, period)
        for t in range(tau):
            assert forecast[t] == history[len(history) - period + (t % period)]

    def test_short_history_rejected(self):
        with pytest.raises(ContractError):
            S.seasonal_naive_forecast(np.ones(5), tau=3, period=7)
