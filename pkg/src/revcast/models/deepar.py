"""Autoregressive Gaussian likelihood model with shared encoder/decoder weights.

One LSTM consumes [lagged target, known calendar features, embedded
categoricals] at every step; a head predicts the mean and standard deviation
of the next value. Training is teacher-forced negative log likelihood over
the whole window. Forecasting runs ancestral sampling: the autoregressive
loop is repeated with each step drawn from the predicted distribution and
fed forward, and the point forecast is the per-step sample median. Unknown
covariates are excluded because they would be unavailable in the prediction
range while the weights are shared across ranges.
"""
from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..errors import ContractError
from ..layers import Embedding, Linear, LstmStack
from ..losses import gaussian_nll
from ..tensor import Tensor
from .base import Batch, Forecaster, ForecastOutput

SIGMA_FLOOR = 1e-6


class DeepArForecaster(Forecaster):
    kind = "deepar"

    def __init__(self, config, schema, seed: int = 0):
        super().__init__(config, schema)
        rng = np.random.default_rng(seed)
        self.cat_embeds = [Embedding(vocab, config.cat_embed_dim, rng)
                           for _, vocab in schema.known_cats]
        self.static_embeds = [Embedding(vocab, config.static_embed_dim, rng)
                              for _, vocab in schema.static_cats]
        input_dim = (1 + len(schema.known_reals)
                     + config.cat_embed_dim * len(self.cat_embeds)
                     + config.static_embed_dim * len(self.static_embeds))
        self.lstm = LstmStack(input_dim, config.hidden_size, config.layers, rng,
                              dropout=config.dropout)
        self.mu_head = Linear(config.hidden_size, 1, rng)
        self.sigma_head = Linear(config.hidden_size, 1, rng)
        # index of day_of_year inside the encoder real block
        self._known_real_start = 1 + len(schema.unknown_reals)

    def parameters(self):
        params = [p for e in self.cat_embeds + self.static_embeds for p in e.parameters()]
        return params + self.lstm.parameters() + self.mu_head.parameters() + self.sigma_head.parameters()

    def _step_input(self, lag, known_reals, known_cats, statics):
        parts = [lag, known_reals] if known_reals is not None else [lag]
        for j, embed in enumerate(self.cat_embeds):
            parts.append(embed(known_cats[:, j]))
        parts += statics
        return T.concat(parts, axis=1)

    def _static_tensors(self, batch: Batch):
        return [embed(batch.statics[:, j]) for j, embed in enumerate(self.static_embeds)]

    def _emit(self, hidden):
        mu = self.mu_head(hidden)
        sigma = T.add(T.softplus(self.sigma_head(hidden)), SIGMA_FLOOR)
        return mu, sigma

    def loss(self, batch: Batch, train: bool = True, rng=None):
        """Teacher-forced NLL over encoder steps 1..k-1 and all decode steps."""
        self.check_batch(batch)
        k, tau = self.config.lookback, self.config.horizon
        n_kr = len(self.schema.known_reals)
        statics = self._static_tensors(batch)
        target_col = batch.enc_reals[:, :, 0]

        steps = []
        truths = []
        for t in range(1, k):
            lag = Tensor(target_col[:, t - 1:t])
            known = Tensor(batch.enc_reals[:, t, self._known_real_start:]) if n_kr else None
            steps.append(self._step_input(lag, known, batch.enc_cats[:, t, :], statics))
            truths.append(target_col[:, t])
        for t in range(tau):
            lag_values = target_col[:, -1] if t == 0 else batch.target[:, t - 1]
            known = Tensor(batch.dec_reals[:, t, :]) if n_kr else None
            steps.append(self._step_input(Tensor(lag_values[:, None]), known,
                                          batch.dec_cats[:, t, :], statics))
            truths.append(batch.target[:, t])
        outputs, _ = self.lstm.unroll(steps, train=train, rng=rng)
        hidden = T.concat(outputs, axis=0)
        mu, sigma = self._emit(hidden)
        truth = np.concatenate(truths)[:, None]
        return gaussian_nll(truth, mu, sigma)

    def predict(self, batch: Batch, rng=None, n_samples: int | None = None) -> ForecastOutput:
        """Ancestral sampling: per-step sample median plus empirical (mean, std)."""
        n_samples = self.config.n_samples if n_samples is None else n_samples
        if n_samples < 1:
            raise ContractError(f"n_samples must be at least 1, got {n_samples}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.check_batch(batch)
        k, tau = self.config.lookback, self.config.horizon
        b = batch.size
        n_kr = len(self.schema.known_reals)
        with T.no_grad():
            statics = self._static_tensors(batch)
            target_col = batch.enc_reals[:, :, 0]
            warm_steps = []
            for t in range(1, k):
                lag = Tensor(target_col[:, t - 1:t])
                known = Tensor(batch.enc_reals[:, t, self._known_real_start:]) if n_kr else None
                warm_steps.append(self._step_input(lag, known, batch.enc_cats[:, t, :], statics))
            if warm_steps:
                _, warm_states = self.lstm.unroll(warm_steps)
            else:
                d = self.config.hidden_size
                warm_states = [(Tensor(np.zeros((b, d))), Tensor(np.zeros((b, d))))
                               for _ in self.lstm.cells]

            paths = np.empty((n_samples, b, tau))
            for s in range(n_samples):
                states = [(Tensor(h.data.copy()), Tensor(c.data.copy())) for h, c in warm_states]
                lag = target_col[:, -1].copy()
                for t in range(tau):
                    known = Tensor(batch.dec_reals[:, t, :]) if n_kr else None
                    x = self._step_input(Tensor(lag[:, None]), known, batch.dec_cats[:, t, :], statics)
                    out, states = self.lstm.unroll([x], init_states=states)
                    mu, sigma = self._emit(out[-1])
                    draw = mu.data[:, 0] + sigma.data[:, 0] * rng.standard_normal(b)
                    paths[s, :, t] = draw
                    lag = draw
        point = np.median(paths, axis=0)
        dist = np.stack([paths.mean(axis=0), paths.std(axis=0)], axis=2)
        return ForecastOutput(
            predictions=point[:, :, None],
            quantiles=(0.5,),
            distribution_params=dist,
        )
