"""Training loop, currency-scale evaluation, and budgeted random search.

Training runs seeded shuffled mini-batches through Adam with global-norm
gradient clipping, records per-epoch validation loss, and returns the
parameters from the best validation epoch. Metrics are computed after
inverse-transforming predictions and targets back to currency units.
Hyperparameter search is a seeded uniform random search over discrete
choices, each trial trained for a small epoch budget and ranked by
validation loss.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .data import ScalerMap, WindowSet
from .errors import ConfigError, ContractError, NumericError
from .losses import mae, mape, smape
from .models import Forecaster, ModelConfig, build_model, collate
from .models.base import quantile_crossing_rate
from .synthgen import seasonal_naive_forecast
from .tensor import Adam


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 5
    learning_rate: float = 1e-3
    seed: int = 0
    clip_norm: float | None = 1.0
    patience: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ContractError(f"epochs must be at least 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class TrainResult:
    model: Forecaster
    history: list
    best_epoch: int


def clip_gradient_norm(params, max_norm: float) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(total))
    if max_norm is not None and norm > max_norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


def _epoch_loss(model: Forecaster, windows: WindowSet, batch_size: int) -> float:
    """Average loss over a window set in eval mode (no dropout, no graph)."""
    total = 0.0
    count = 0
    with T.no_grad():
        for start in range(0, len(windows), batch_size):
            batch = collate(windows.samples[start:start + batch_size], windows.schema)
            total += model.loss(batch, train=False).item() * batch.size
            count += batch.size
    return total / count


def train(model: Forecaster, train_windows: WindowSet, val_windows: WindowSet,
          config: TrainConfig) -> TrainResult:
    if len(train_windows) == 0:
        raise ContractError("training requires a non-empty window set")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.parameters(), learning_rate=config.learning_rate)
    history = []
    best_val = np.inf
    best_state = None
    best_epoch = -1
    epochs_since_best = 0
    samples = train_windows.samples
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        epoch_total = 0.0
        for batch_index, start in enumerate(range(0, len(samples), config.batch_size)):
            chosen = [samples[i] for i in order[start:start + config.batch_size]]
            batch = collate(chosen, train_windows.schema)
            optimizer.zero_grad()
            loss = model.loss(batch, train=True, rng=rng)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite training loss in epoch {epoch}, batch {batch_index}"
                )
            T.backward(loss)
            clip_gradient_norm(optimizer.params, config.clip_norm)
            optimizer.step()
            epoch_total += value * batch.size
        train_loss = epoch_total / len(samples)
        val_loss = (_epoch_loss(model, val_windows, config.batch_size)
                    if len(val_windows) else float("nan"))
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        selector = val_loss if np.isfinite(val_loss) else train_loss
        if selector < best_val:
            best_val = selector
            best_state = model.get_state()
            best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if config.patience is not None and epochs_since_best > config.patience:
                break
    if best_state is not None:
        model.set_state(best_state)
    return TrainResult(model=model, history=history, best_epoch=best_epoch)


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class MetricsReport:
    horizon: int
    n_windows: int
    mae: float
    mape: float
    smape: float
    per_step: list = field(default_factory=list)
    per_publisher: dict = field(default_factory=dict)
    crossing_rate: float = 0.0

    def rows(self, model_name: str):
        """CSV-ready rows with columns (model, horizon, MAE, MAPE, SMAPE)."""
        out = [{"model": model_name, "horizon": "aggregate",
                "MAE": self.mae, "MAPE": self.mape, "SMAPE": self.smape}]
        for step in self.per_step:
            out.append({"model": model_name, "horizon": str(step["step"]),
                        "MAE": step["mae"], "MAPE": step["mape"], "SMAPE": step["smape"]})
        return out


def _metrics_from_errors(y_true: np.ndarray, y_pred: np.ndarray, publisher_ids,
                         horizon: int, crossing: float = 0.0) -> MetricsReport:
    per_step = []
    for h in range(horizon):
        per_step.append({
            "step": h + 1,
            "mae": mae(y_true[:, h], y_pred[:, h]),
            "mape": mape(y_true[:, h], y_pred[:, h]),
            "smape": smape(y_true[:, h], y_pred[:, h]),
        })
    per_publisher = {}
    ids = np.array(publisher_ids)
    for pid in dict.fromkeys(publisher_ids):
        m = ids == pid
        per_publisher[pid] = {
            "mae": mae(y_true[m], y_pred[m]),
            "mape": mape(y_true[m], y_pred[m]),
            "smape": smape(y_true[m], y_pred[m]),
        }
    return MetricsReport(
        horizon=horizon,
        n_windows=len(y_true),
        mae=mae(y_true, y_pred),
        mape=mape(y_true, y_pred),
        smape=smape(y_true, y_pred),
        per_step=per_step,
        per_publisher=per_publisher,
        crossing_rate=crossing,
    )


def evaluate(model: Forecaster, windows: WindowSet, scalers: ScalerMap,
             batch_size: int = 128, seed: int = 0) -> MetricsReport:
    """Point forecasts (median for quantile models) on the currency scale."""
    if len(windows) == 0:
        raise ContractError("evaluation requires a non-empty window set")
    rng = np.random.default_rng(seed)
    horizon = windows.horizon
    truths, preds, pids = [], [], []
    crossing_sum = 0.0
    for start in range(0, len(windows), batch_size):
        batch = collate(windows.samples[start:start + batch_size], windows.schema)
        out = model.predict(batch, rng=rng)
        crossing_sum += quantile_crossing_rate(out) * batch.size
        point = out.point()
        for i, pid in enumerate(batch.publisher_ids):
            truths.append(scalers.inverse_revenue(pid, batch.target[i]))
            preds.append(scalers.inverse_revenue(pid, point[i]))
            pids.append(pid)
    return _metrics_from_errors(np.array(truths), np.array(preds), pids, horizon,
                                crossing=crossing_sum / len(windows))


def evaluate_seasonal_naive(windows: WindowSet, scalers: ScalerMap,
                            period: int = 7) -> MetricsReport:
    """Seasonal-naive baseline on the same windows, computed from the raw
    (inverse-transformed) encoder revenue history."""
    if len(windows) == 0:
        raise ContractError("evaluation requires a non-empty window set")
    truths, preds, pids = [], [], []
    for sample in windows:
        history = scalers.inverse_revenue(sample.publisher_id, sample.encoder[:, 0])
        forecast = seasonal_naive_forecast(history, windows.horizon, period=period)
        truths.append(scalers.inverse_revenue(sample.publisher_id, sample.target))
        preds.append(forecast)
        pids.append(sample.publisher_id)
    return _metrics_from_errors(np.array(truths), np.array(preds), pids, windows.horizon)


# ---------------------------------------------------------------------------
# hyperparameter search

@dataclass
class SearchSpace:
    parameters: dict
    trials: int = 20
    epochs_per_trial: int = 5

    def __post_init__(self):
        if self.trials < 1:
            raise ContractError(f"search budget must be at least 1, got {self.trials}")
        for name, choices in self.parameters.items():
            if not choices:
                raise ConfigError(f"empty choice list for parameter {name!r}")


def default_search_space(kind: str) -> SearchSpace:
    learning_rate = (1e-3, 1e-4)
    spaces = {
        "tft": {"hidden_size": (8, 16, 32, 64), "dropout": (0.0, 0.1, 0.2, 0.3),
                "heads": (1, 2, 4), "learning_rate": learning_rate},
        "seq2seq": {"hidden_size": (8, 16, 32, 64), "decoder_hidden_size": (8, 16, 32, 64),
                    "dropout": (0.0, 0.1, 0.2, 0.3), "decoder_dropout": (0.0, 0.1, 0.2, 0.3),
                    "layers": (1, 2), "learning_rate": learning_rate},
        "lstm": {"hidden_size": (8, 16, 32, 64), "layers": (1, 2, 3),
                 "dropout": (0.0, 0.1, 0.2, 0.3), "learning_rate": learning_rate},
        "deepar": {"hidden_size": (8, 16, 32, 64), "layers": (1, 2, 3),
                   "dropout": (0.0, 0.1, 0.2, 0.3), "learning_rate": learning_rate},
        "nbeats": {"nbeats_width": (32, 64, 128, 256), "nbeats_blocks": (2, 3, 4),
                   "learning_rate": learning_rate},
    }
    if kind not in spaces:
        raise ConfigError(f"no search space for model kind {kind!r}")
    return SearchSpace(parameters=spaces[kind])


@dataclass
class SearchResult:
    best_params: dict
    best_val_loss: float
    trials: list


def hparam_search(base_config: ModelConfig, space: SearchSpace,
                  train_windows: WindowSet, val_windows: WindowSet,
                  seed: int = 0, batch_size: int = 32) -> SearchResult:
    """Seeded uniform random search; every trial gets the same epoch budget."""
    rng = np.random.default_rng(seed)
    names = sorted(space.parameters)
    trials = []
    best = None
    for trial_index in range(space.trials):
        sampled = {}
        for name in names:
            choices = space.parameters[name]
            sampled[name] = choices[int(rng.integers(len(choices)))]
        trial_seed = int(rng.integers(2 ** 31))
        learning_rate = float(sampled.pop("learning_rate", 1e-3))
        config = replace(base_config, **sampled)
        model = build_model(config, train_windows.schema, seed=trial_seed)
        result = train(model, train_windows, val_windows, TrainConfig(
            batch_size=batch_size, epochs=space.epochs_per_trial,
            learning_rate=learning_rate, seed=trial_seed,
        ))
        val_losses = [h["val_loss"] for h in result.history if np.isfinite(h["val_loss"])]
        score = min(val_losses) if val_losses else min(h["train_loss"] for h in result.history)
        row = dict(trial=trial_index, seed=trial_seed, val_loss=score,
                   learning_rate=learning_rate, **sampled)
        trials.append(row)
        if best is None or score < best[0]:
            best = (score, dict(row))
    best_score, best_row = best
    best_params = {k: v for k, v in best_row.items() if k not in ("trial", "val_loss")}
    return SearchResult(best_params=best_params, best_val_loss=best_score, trials=trials)
