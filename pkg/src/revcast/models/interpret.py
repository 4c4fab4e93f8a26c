"""Interpretability extraction from a trained fused model.

Variable importance averages the selection weights over all samples and time
steps, per input group; each group stays on the simplex. The attention
profile averages the (already row-stochastic) mean-attention mass by
relative lag, decode position minus attended position.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import WindowSet
from ..errors import CapabilityError
from .base import Forecaster, collate


@dataclass
class VariableImportance:
    encoder_names: list
    encoder: np.ndarray
    decoder_names: list
    decoder: np.ndarray
    static_names: list
    static: np.ndarray


def _require_tft(model: Forecaster):
    if model.kind != "tft":
        raise CapabilityError(f"interpretability extraction requires the fused model, got {model.kind!r}")


def _batches(windows: WindowSet, batch_size: int):
    samples = windows.samples
    for start in range(0, len(samples), batch_size):
        yield collate(samples[start:start + batch_size], windows.schema)


def extract_variable_importance(model: Forecaster, windows: WindowSet,
                                batch_size: int = 128) -> VariableImportance:
    _require_tft(model)
    enc_sum = dec_sum = static_sum = None
    enc_n = dec_n = static_n = 0
    for batch in _batches(windows, batch_size):
        out = model.predict(batch)
        e = out.encoder_weights.reshape(-1, out.encoder_weights.shape[-1])
        d = out.decoder_weights.reshape(-1, out.decoder_weights.shape[-1])
        s = out.static_weights
        enc_sum = e.sum(axis=0) if enc_sum is None else enc_sum + e.sum(axis=0)
        dec_sum = d.sum(axis=0) if dec_sum is None else dec_sum + d.sum(axis=0)
        static_sum = s.sum(axis=0) if static_sum is None else static_sum + s.sum(axis=0)
        enc_n += e.shape[0]
        dec_n += d.shape[0]
        static_n += s.shape[0]
    schema = windows.schema
    return VariableImportance(
        encoder_names=list(schema.encoder_columns),
        encoder=enc_sum / enc_n,
        decoder_names=list(schema.decoder_columns),
        decoder=dec_sum / dec_n,
        static_names=[name for name, _ in schema.static_cats],
        static=static_sum / static_n,
    )


def extract_attention_profile(model: Forecaster, windows: WindowSet,
                              batch_size: int = 128) -> np.ndarray:
    """Mean attention mass per relative lag; entry L averages A[t, t-L] over
    all samples and decode rows where the lag exists."""
    _require_tft(model)
    k = windows.lookback
    total = k + windows.horizon
    sums = np.zeros(total)
    counts = np.zeros(total, dtype=np.int64)
    for batch in _batches(windows, batch_size):
        out = model.predict(batch)
        attention = out.attention  # (B, total, total), decode rows populated
        for j in range(windows.horizon):
            position = k + j
            row = attention[:, position, :position + 1]
            lags = position - np.arange(position + 1)
            sums[lags] += row.sum(axis=0)
            counts[lags] += row.shape[0]
    profile = np.zeros(total)
    mask = counts > 0
    profile[mask] = sums[mask] / counts[mask]
    return profile
