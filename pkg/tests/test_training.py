import numpy as np
import pytest

from revcast import losses as LS
from revcast import training as TR
from revcast.errors import ContractError, NumericError, ShapeError
from revcast.models import ForecastOutput, build_model
from revcast.tensor import Tensor

from conftest import small_pipeline, tiny_config


class TestQuantileLoss:
    def test_median_is_half_absolute_error(self):
        loss = LS.quantile_loss(np.array([3.0]), Tensor([1.0]), 0.5)
        assert abs(loss.item() - 1.0) < 1e-12

    def test_zero_at_perfect_fit(self):
        y = np.array([1.0, -2.0, 0.5])
        for q in (0.1, 0.5, 0.9):
            assert LS.quantile_loss(y, Tensor(y), q).item() == 0.0

    def test_asymmetry(self):
        assert abs(LS.quantile_loss(np.array([1.0]), Tensor([0.0]), 0.9).item() - 0.9) < 1e-12
        assert abs(LS.quantile_loss(np.array([0.0]), Tensor([1.0]), 0.9).item() - 0.1) < 1e-12

    def test_invalid_quantile(self):
        with pytest.raises(ContractError):
            LS.quantile_loss(np.array([1.0]), Tensor([1.0]), 1.0)


class TestMetrics:
    def test_zero_when_equal(self):
        y = np.array([4.0, 5.0])
        assert LS.mae(y, y) == 0.0
        assert LS.mape(y, y) == 0.0
        assert LS.smape(y, y) == 0.0

    def test_analytic_case(self):
        assert LS.mae([1.0], [3.0]) == 2.0
        assert abs(LS.mape([1.0], [3.0]) - 2.0) < 1e-12
        assert abs(LS.smape([1.0], [3.0]) - 2.0 * 2.0 / (4.0 + 1e-6)) < 1e-12

    def test_smape_symmetric(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(0, 9, size=20), rng.uniform(0, 9, size=20)
        assert LS.smape(a, b) == LS.smape(b, a)

    def test_smape_bounded(self):
        rng = np.random.default_rng(1)
        a, b = rng.uniform(0, 9, size=50), rng.uniform(0, 9, size=50)
        assert 0.0 <= LS.smape(a, b) <= 2.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            LS.mae([1.0], [1.0, 2.0])


class TestTrain:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ContractError):
            TR.TrainConfig(epochs=0)

    def test_empty_train_set_rejected(self, tiny_windows):
        from revcast.data import WindowSet
        model = build_model(tiny_config("lstm"), tiny_windows.schema)
        empty = WindowSet([], tiny_windows.schema, 6, 3)
        with pytest.raises(ContractError):
            TR.train(model, empty, empty, TR.TrainConfig())

    def _split(self, windows, frac=0.8):
        from revcast.data import WindowSet
        cut = int(len(windows) * frac)
        make = lambda part: WindowSet(part, windows.schema, windows.lookback, windows.horizon)
        return make(windows.samples[:cut]), make(windows.samples[cut:])

    def test_seeded_history_bit_identical(self, tiny_windows):
        train_part, val_part = self._split(tiny_windows)
        histories = []
        for _ in range(2):
            model = build_model(tiny_config("lstm", hidden_size=8), tiny_windows.schema, seed=5)
            result = TR.train(model, train_part, val_part,
                              TR.TrainConfig(epochs=2, seed=5, batch_size=64))
            histories.append(result.history)
        assert histories[0] == histories[1]

    def test_tft_loss_decreases(self, tiny_windows):
        train_part, val_part = self._split(tiny_windows)
        model = build_model(tiny_config("tft", hidden_size=8, dropout=0.1),
                            tiny_windows.schema, seed=6)
        result = TR.train(model, train_part, val_part,
                          TR.TrainConfig(epochs=3, seed=6, batch_size=64))
        assert result.history[-1]["train_loss"] < result.history[0]["train_loss"]

    def test_best_epoch_parameters_restored(self, tiny_windows):
        train_part, val_part = self._split(tiny_windows)
        model = build_model(tiny_config("lstm", hidden_size=8), tiny_windows.schema, seed=7)
        result = TR.train(model, train_part, val_part,
                          TR.TrainConfig(epochs=4, seed=7, batch_size=64))
        recorded = [h["val_loss"] for h in result.history]
        recomputed = TR._epoch_loss(model, val_part, 64)
        assert abs(recomputed - min(recorded)) < 1e-12
        assert result.best_epoch == int(np.argmin(recorded))

    def test_nan_loss_aborts_with_batch_index(self, tiny_windows):
        train_part, val_part = self._split(tiny_windows)
        model = build_model(tiny_config("lstm"), tiny_windows.schema, seed=8)
        model.head.weight.data[...] = np.nan
        with pytest.raises(NumericError, match="batch 0"):
            TR.train(model, train_part, val_part, TR.TrainConfig(epochs=1))

    def test_early_stop_respects_patience(self, tiny_windows):
        train_part, val_part = self._split(tiny_windows)
        model = build_model(tiny_config("lstm", hidden_size=8), tiny_windows.schema, seed=9)
        result = TR.train(model, train_part, val_part,
                          TR.TrainConfig(epochs=50, seed=9, batch_size=64,
                                         learning_rate=0.05, patience=2))
        assert len(result.history) < 50
        stale = len(result.history) - 1 - result.best_epoch
        assert stale == 3  # patience 2 tolerates two stale epochs, stops on the third

    def test_clip_gradient_norm(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        p.grad = np.array([3.0, 4.0, 0.0])
        norm = TR.clip_gradient_norm([p], 1.0)
        assert abs(norm - 5.0) < 1e-12
        assert abs(np.linalg.norm(p.grad) - 1.0) < 1e-12


class _OracleModel:
    """Predicts the normalized targets exactly."""

    kind = "oracle"

    def predict(self, batch, rng=None):
        return ForecastOutput(predictions=batch.target[:, :, None], quantiles=(0.5,))


class _ZeroModel:
    kind = "zero"

    def predict(self, batch, rng=None):
        return ForecastOutput(
            predictions=np.full((batch.size, batch.target.shape[1], 1), -50.0),
            quantiles=(0.5,),
        )


class TestEvaluate:
    def _windows_scalers(self):
        # lookback of 10 so the weekly seasonal-naive baseline has history
        windows, scalers, _ = small_pipeline(seed=3, lookback=10)
        return windows, scalers

    def test_perfect_oracle_scores_zero(self):
        windows, scalers = self._windows_scalers()
        report = TR.evaluate(_OracleModel(), windows, scalers)
        assert report.mae < 1e-7
        assert report.mape < 1e-9
        assert report.smape < 1e-9

    def test_constant_zero_predictor_hits_smape_bound(self):
        windows, scalers = self._windows_scalers()
        report = TR.evaluate(_ZeroModel(), windows, scalers)
        assert report.smape > 1.999

    def test_missing_scaler_is_lookup_error(self):
        windows, scalers = self._windows_scalers()
        scalers.stats.pop(windows.samples[0].publisher_id)
        with pytest.raises(KeyError):
            TR.evaluate(_OracleModel(), windows, scalers)

    def test_seasonal_naive_matches_standalone_formulas(self):
        windows, scalers = self._windows_scalers()
        report = TR.evaluate_seasonal_naive(windows, scalers, period=7)
        # independent recomputation straight from the definitions
        errs, trues, preds = [], [], []
        for s in windows:
            mean, std = scalers.pair(s.publisher_id, "revenue")
            hist = np.maximum(np.expm1(s.encoder[:, 0] * std + mean), 0.0)
            truth = np.maximum(np.expm1(s.target * std + mean), 0.0)
            pred = np.array([hist[len(hist) - 7 + (t % 7)] for t in range(windows.horizon)])
            trues.append(truth)
            preds.append(pred)
        trues, preds = np.array(trues), np.array(preds)
        assert abs(report.mae - np.abs(trues - preds).mean()) < 1e-10
        assert abs(report.smape
                   - (2 * np.abs(trues - preds) / (np.abs(trues) + np.abs(preds) + 1e-6)).mean()) < 1e-10

    def test_report_rows_have_contracted_columns(self):
        windows, scalers = self._windows_scalers()
        report = TR.evaluate(_OracleModel(), windows, scalers)
        rows = report.rows("oracle")
        assert set(rows[0]) == {"model", "horizon", "MAE", "MAPE", "SMAPE"}
        assert len(rows) == 1 + windows.horizon
        assert set(report.per_publisher) == {s.publisher_id for s in windows}


class TestHparamSearch:
    def _splits(self):
        windows, _, _ = small_pipeline(seed=4)
        from revcast.data import WindowSet
        cut = int(len(windows) * 0.8)
        make = lambda part: WindowSet(part, windows.schema, windows.lookback, windows.horizon)
        return make(windows.samples[:cut]), make(windows.samples[cut:])

    def test_budget_one_returns_single_trial(self):
        train_part, val_part = self._splits()
        space = TR.SearchSpace(parameters={"hidden_size": (8,), "learning_rate": (0.01,)},
                               trials=1, epochs_per_trial=1)
        result = TR.hparam_search(tiny_config("lstm"), space, train_part, val_part, seed=1)
        assert len(result.trials) == 1
        assert result.best_params["hidden_size"] == 8

    def test_fixed_seed_identical_trial_sequence(self):
        train_part, val_part = self._splits()
        space = TR.SearchSpace(parameters={"hidden_size": (4, 8, 16), "learning_rate": (1e-2, 1e-3)},
                               trials=3, epochs_per_trial=1)
        a = TR.hparam_search(tiny_config("lstm"), space, train_part, val_part, seed=2)
        b = TR.hparam_search(tiny_config("lstm"), space, train_part, val_part, seed=2)
        assert a.trials == b.trials
        assert a.best_params == b.best_params

    def test_search_avoids_degenerate_width(self):
        train_part, val_part = self._splits()
        space = TR.SearchSpace(parameters={"hidden_size": (1, 16), "learning_rate": (0.01,)},
                               trials=10, epochs_per_trial=2)
        result = TR.hparam_search(tiny_config("lstm"), space, train_part, val_part, seed=3)
        assert result.best_params["hidden_size"] == 16

    def test_invalid_budget(self):
        with pytest.raises(ContractError):
            TR.SearchSpace(parameters={"hidden_size": (8,)}, trials=0)

    def test_default_spaces_cover_all_kinds(self):
        for kind in ("tft", "lstm", "seq2seq", "deepar", "nbeats"):
            space = TR.default_search_space(kind)
            assert space.trials == 20
            assert space.epochs_per_trial == 5
            assert "learning_rate" in space.parameters
