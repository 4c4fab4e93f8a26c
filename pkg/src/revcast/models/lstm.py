"""Plain LSTM baseline: unrolled over the lookback window, statics omitted.

The multi-step output comes from the final hidden state through a single
linear layer sized to the horizon.
"""
from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..layers import Embedding, Linear, LstmStack
from ..tensor import Tensor
from .base import Batch, Forecaster, ForecastOutput, mse_loss


class LstmForecaster(Forecaster):
    kind = "lstm"

    def __init__(self, config, schema, seed: int = 0):
        super().__init__(config, schema)
        rng = np.random.default_rng(seed)
        self.cat_embeds = [Embedding(vocab, config.cat_embed_dim, rng)
                           for _, vocab in schema.known_cats]
        input_dim = schema.n_encoder_reals + config.cat_embed_dim * len(self.cat_embeds)
        self.lstm = LstmStack(input_dim, config.hidden_size, config.layers, rng,
                              dropout=config.dropout)
        self.head = Linear(config.hidden_size, config.horizon, rng)

    def parameters(self):
        params = [p for e in self.cat_embeds for p in e.parameters()]
        return params + self.lstm.parameters() + self.head.parameters()

    def _steps(self, batch: Batch):
        k = self.config.lookback
        steps = []
        for t in range(k):
            parts = [Tensor(batch.enc_reals[:, t, :])]
            for j, embed in enumerate(self.cat_embeds):
                parts.append(embed(batch.enc_cats[:, t, j]))
            steps.append(T.concat(parts, axis=1) if len(parts) > 1 else parts[0])
        return steps

    def forward(self, batch: Batch, train: bool = False, rng=None):
        self.check_batch(batch)
        outputs, _ = self.lstm.unroll(self._steps(batch), train=train, rng=rng)
        return self.head(outputs[-1])

    def loss(self, batch: Batch, train: bool = True, rng=None):
        return mse_loss(self.forward(batch, train=train, rng=rng), batch.target)

    def predict(self, batch: Batch, rng=None) -> ForecastOutput:
        with T.no_grad():
            pred = self.forward(batch, train=False)
        return ForecastOutput(predictions=pred.data[:, :, None], quantiles=(0.5,))
