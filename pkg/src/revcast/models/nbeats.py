"""Doubly residual stack of fully connected blocks, generic configuration.

Univariate: the input is the normalized target history alone. Each block runs
four ReLU layers, then emits a backcast (subtracted from the running input)
and a forecast (summed into the model output).
"""
from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..layers import Linear
from ..tensor import Tensor
from .base import Batch, Forecaster, ForecastOutput, mse_loss


class NBeatsBlock:
    def __init__(self, lookback: int, horizon: int, width: int, rng: np.random.Generator):
        dims = [lookback] + [width] * 4
        self.fc = [Linear(dims[i], dims[i + 1], rng) for i in range(4)]
        self.backcast_head = Linear(width, lookback, rng)
        self.forecast_head = Linear(width, horizon, rng)

    def __call__(self, x):
        h = x
        for layer in self.fc:
            h = T.relu(layer(h))
        return self.backcast_head(h), self.forecast_head(h)

    def parameters(self):
        params = [p for layer in self.fc for p in layer.parameters()]
        return params + self.backcast_head.parameters() + self.forecast_head.parameters()


class NBeatsForecaster(Forecaster):
    kind = "nbeats"

    def __init__(self, config, schema, seed: int = 0):
        super().__init__(config, schema)
        rng = np.random.default_rng(seed)
        self.blocks = [
            NBeatsBlock(config.lookback, config.horizon, config.nbeats_width, rng)
            for _ in range(config.nbeats_blocks)
        ]

    def parameters(self):
        return [p for block in self.blocks for p in block.parameters()]

    def forward(self, batch: Batch, train: bool = False, rng=None):
        """Returns (total forecast (B,tau), per-block forecasts, final residual)."""
        self.check_batch(batch)
        residual = Tensor(batch.enc_reals[:, :, 0])
        block_forecasts = []
        total = None
        for block in self.blocks:
            backcast, forecast = block(residual)
            residual = T.sub(residual, backcast)
            block_forecasts.append(forecast)
            total = forecast if total is None else T.add(total, forecast)
        return total, block_forecasts, residual

    def loss(self, batch: Batch, train: bool = True, rng=None):
        total, _, _ = self.forward(batch, train=train, rng=rng)
        return mse_loss(total, batch.target)

    def predict(self, batch: Batch, rng=None) -> ForecastOutput:
        with T.no_grad():
            total, _, _ = self.forward(batch, train=False)
        return ForecastOutput(predictions=total.data[:, :, None], quantiles=(0.5,))
