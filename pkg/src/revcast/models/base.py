"""Shared model infrastructure: configs, batching, outputs, checkpoints."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np

from .. import tensor as T
from ..data import FeatureSchema
from ..errors import ConfigError, DataError, ShapeError

MODEL_KINDS = ("tft", "lstm", "seq2seq", "deepar", "nbeats")


@dataclass
class ModelConfig:
    kind: str
    lookback: int = 89
    horizon: int = 7
    hidden_size: int = 16
    heads: int = 4
    dropout: float = 0.1
    layers: int = 1
    quantiles: tuple = (0.1, 0.5, 0.9)
    cat_embed_dim: int = 4
    static_embed_dim: int = 8
    decoder_hidden_size: int | None = None
    decoder_dropout: float | None = None
    nbeats_blocks: int = 3
    nbeats_width: int = 128
    n_samples: int = 100

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}, expected one of {MODEL_KINDS}")
        if self.lookback < 1 or self.horizon < 1:
            raise ConfigError(f"lookback/horizon must be positive, got {self.lookback}/{self.horizon}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")
        self.quantiles = tuple(float(q) for q in self.quantiles)
        if any(not 0.0 < q < 1.0 for q in self.quantiles):
            raise ConfigError(f"quantiles must lie in (0,1), got {self.quantiles}")

    def describe(self) -> dict:
        d = asdict(self)
        d["quantiles"] = list(self.quantiles)
        return d


@dataclass
class Batch:
    enc_reals: np.ndarray
    enc_cats: np.ndarray
    dec_reals: np.ndarray
    dec_cats: np.ndarray
    statics: np.ndarray
    target: np.ndarray
    publisher_ids: list
    anchors: list

    @property
    def size(self) -> int:
        return self.enc_reals.shape[0]


def collate(samples, schema: FeatureSchema) -> Batch:
    """Stack window samples into batch arrays, splitting reals from categoricals."""
    if not samples:
        raise ShapeError("cannot collate an empty batch")
    n_reals = schema.n_encoder_reals
    n_known_reals = len(schema.known_reals)
    width = len(schema.encoder_columns)
    first = samples[0]
    if first.encoder.shape[1] != width:
        raise DataError(
            f"sample encoder width {first.encoder.shape[1]} does not match schema "
            f"width {width}; was the window set built with a different schema?"
        )
    encoder = np.stack([s.encoder for s in samples])
    decoder = np.stack([s.decoder for s in samples])
    return Batch(
        enc_reals=encoder[:, :, :n_reals],
        enc_cats=encoder[:, :, n_reals:].astype(np.int64),
        dec_reals=decoder[:, :, :n_known_reals],
        dec_cats=decoder[:, :, n_known_reals:].astype(np.int64),
        statics=np.stack([s.statics for s in samples]),
        target=np.stack([s.target for s in samples]),
        publisher_ids=[s.publisher_id for s in samples],
        anchors=[s.anchor for s in samples],
    )


@dataclass
class ForecastOutput:
    """Batched predictions plus whatever interpretability payload the model has.

    ``predictions`` is (B, horizon, Q) where Q is 1 for point models.
    ``attention`` is (B, T, T) for the fused model (decode rows populated,
    row-stochastic) and (B, horizon, lookback) for the attention seq2seq.
    """

    predictions: np.ndarray
    quantiles: tuple
    attention: np.ndarray | None = None
    encoder_weights: np.ndarray | None = None
    decoder_weights: np.ndarray | None = None
    static_weights: np.ndarray | None = None
    distribution_params: np.ndarray | None = None

    def point(self) -> np.ndarray:
        """Median (or single-column) forecast, (B, horizon)."""
        if 0.5 in self.quantiles:
            return self.predictions[:, :, self.quantiles.index(0.5)]
        return self.predictions[:, :, self.predictions.shape[2] // 2]


class Forecaster:
    kind = "base"

    def __init__(self, config: ModelConfig, schema: FeatureSchema):
        self.config = config
        self.schema = schema

    def parameters(self):
        raise NotImplementedError

    def loss(self, batch: Batch, train: bool = True, rng=None):
        raise NotImplementedError

    def predict(self, batch: Batch, rng=None) -> ForecastOutput:
        raise NotImplementedError

    def check_batch(self, batch: Batch) -> None:
        k, tau = self.config.lookback, self.config.horizon
        if batch.enc_reals.shape[1] != k or batch.target.shape[1] != tau:
            raise ShapeError(
                f"batch windows are ({batch.enc_reals.shape[1]}, {batch.target.shape[1]}) "
                f"but the model was configured for lookback {k}, horizon {tau}"
            )
        if batch.enc_reals.shape[2] != self.schema.n_encoder_reals:
            raise ShapeError(
                f"batch has {batch.enc_reals.shape[2]} encoder reals, schema expects "
                f"{self.schema.n_encoder_reals}"
            )

    def get_state(self):
        return [p.data.copy() for p in self.parameters()]

    def set_state(self, arrays) -> None:
        params = self.parameters()
        if len(arrays) != len(params):
            raise ShapeError(f"state has {len(arrays)} arrays, model has {len(params)} parameters")
        for p, a in zip(params, arrays):
            a = np.asarray(a, dtype=np.float64)
            if a.shape != p.data.shape:
                raise ShapeError(f"state array shape {a.shape} does not match parameter {p.data.shape}")
            p.data[...] = a

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def mse_loss(pred, target: np.ndarray):
    diff = T.sub(pred, T.Tensor(target))
    return T.tmean(T.mul(diff, diff))


def quantile_crossing_rate(output: ForecastOutput) -> float:
    """Fraction of forecast rows whose quantile columns are not non-decreasing.

    Quantile heads are unconstrained, so crossings are reported rather than
    prevented; point models always return 0.
    """
    preds = output.predictions
    if preds.shape[2] < 2:
        return 0.0
    crossed = (np.diff(preds, axis=2) < 0).any(axis=2)
    return float(crossed.mean())


def build_model(config: ModelConfig, schema: FeatureSchema, seed: int = 0) -> Forecaster:
    from .tft import TemporalFusionTransformer
    from .lstm import LstmForecaster
    from .seq2seq import Seq2SeqForecaster
    from .deepar import DeepArForecaster
    from .nbeats import NBeatsForecaster

    builders = {
        "tft": TemporalFusionTransformer,
        "lstm": LstmForecaster,
        "seq2seq": Seq2SeqForecaster,
        "deepar": DeepArForecaster,
        "nbeats": NBeatsForecaster,
    }
    return builders[config.kind](config, schema, seed=seed)


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "revcast-checkpoint-v1"


def schema_fingerprint(config: ModelConfig, schema: FeatureSchema) -> str:
    payload = {"config": config.describe(), "schema": schema.describe()}
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_checkpoint(model: Forecaster, path, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.describe(),
        "schema": model.schema.describe(),
        "schema_hash": schema_fingerprint(model.config, model.schema),
        "params": [{"shape": list(p.data.shape), "values": p.data.reshape(-1).tolist()}
                   for p in model.parameters()],
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path):
    """Rebuild the model from a checkpoint file; returns (model, extra)."""
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a recognized checkpoint (format {payload.get('format')!r})")
    raw = dict(payload["config"])
    raw["quantiles"] = tuple(raw["quantiles"])
    config = ModelConfig(**raw)
    s = payload["schema"]
    schema = FeatureSchema(
        target=s["target"],
        unknown_reals=tuple(s["unknown_reals"]),
        known_reals=tuple(s["known_reals"]),
        known_cats=tuple((n, v) for n, v in s["known_cats"]),
        static_cats=tuple((n, v) for n, v in s["static_cats"]),
        vocabs={k: list(v) for k, v in s["vocabs"].items()},
    )
    expected = schema_fingerprint(config, schema)
    if payload["schema_hash"] != expected:
        raise DataError(f"checkpoint schema hash mismatch in {path}; file corrupted or edited")
    model = build_model(config, schema, seed=0)
    arrays = [np.array(p["values"], dtype=np.float64).reshape(p["shape"]) for p in payload["params"]]
    model.set_state(arrays)
    return model, payload.get("extra", {})


def ensure_schema_match(model_schema: FeatureSchema, data_schema: FeatureSchema) -> None:
    if model_schema.describe() != data_schema.describe():
        raise DataError(
            "feature schema of the data does not match the checkpoint schema; "
            f"checkpoint {model_schema.describe()} vs data {data_schema.describe()}"
        )
