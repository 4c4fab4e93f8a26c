"""Encoder-decoder LSTM with additive attention and a recursive decoder.

The encoder consumes the full feature window. Each decode step receives the
known calendar features, the (repeated) static embeddings, an attention
context over the encoder hidden states computed from the previous decoder
hidden state, and the previous prediction; the first step is seeded with the
last observed normalized target. Decoder states are initialized from the
last encoder cell, through a bias-free bridge when the widths differ.
"""
from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..layers import BahdanauAttention, Embedding, Linear, LstmCell, LstmStack
from ..tensor import Tensor
from .base import Batch, Forecaster, ForecastOutput, mse_loss


class Seq2SeqForecaster(Forecaster):
    kind = "seq2seq"

    def __init__(self, config, schema, seed: int = 0):
        super().__init__(config, schema)
        rng = np.random.default_rng(seed)
        enc_hidden = config.hidden_size
        dec_hidden = config.decoder_hidden_size or enc_hidden
        self.dec_hidden = dec_hidden
        self.dec_dropout = config.dropout if config.decoder_dropout is None else config.decoder_dropout

        self.cat_embeds = [Embedding(vocab, config.cat_embed_dim, rng)
                           for _, vocab in schema.known_cats]
        self.static_embeds = [Embedding(vocab, config.static_embed_dim, rng)
                              for _, vocab in schema.static_cats]
        enc_input = schema.n_encoder_reals + config.cat_embed_dim * len(self.cat_embeds)
        self.encoder = LstmStack(enc_input, enc_hidden, config.layers, rng, dropout=config.dropout)
        self.bridge_h = self.bridge_c = None
        if enc_hidden != dec_hidden:
            self.bridge_h = Linear(enc_hidden, dec_hidden, rng, bias=False)
            self.bridge_c = Linear(enc_hidden, dec_hidden, rng, bias=False)
        self.attention = BahdanauAttention(enc_hidden, dec_hidden, dec_hidden, rng)
        dec_input = (len(schema.known_reals) + config.cat_embed_dim * len(self.cat_embeds)
                     + config.static_embed_dim * len(self.static_embeds) + enc_hidden + 1)
        self.decoder = LstmCell(dec_input, dec_hidden, rng)
        self.head = Linear(dec_hidden, 1, rng)

    def parameters(self):
        params = [p for e in self.cat_embeds + self.static_embeds for p in e.parameters()]
        params += self.encoder.parameters()
        if self.bridge_h is not None:
            params += self.bridge_h.parameters() + self.bridge_c.parameters()
        params += self.attention.parameters() + self.decoder.parameters() + self.head.parameters()
        return params

    def forward(self, batch: Batch, train: bool = False, rng=None):
        """Returns (predictions (B,tau), attention weights (B,tau,k))."""
        self.check_batch(batch)
        b = batch.size
        k, tau = self.config.lookback, self.config.horizon

        enc_steps = []
        for t in range(k):
            parts = [Tensor(batch.enc_reals[:, t, :])]
            for j, embed in enumerate(self.cat_embeds):
                parts.append(embed(batch.enc_cats[:, t, j]))
            enc_steps.append(T.concat(parts, axis=1) if len(parts) > 1 else parts[0])
        enc_outputs, enc_states = self.encoder.unroll(enc_steps, train=train, rng=rng)
        enc_seq = T.concat([T.reshape(o, (b, 1, -1)) for o in enc_outputs], axis=1)

        h, c = enc_states[-1]
        if self.bridge_h is not None:
            h, c = self.bridge_h(h), self.bridge_c(c)

        statics = [embed(batch.statics[:, j]) for j, embed in enumerate(self.static_embeds)]
        prev = Tensor(batch.enc_reals[:, -1, 0:1])  # last observed normalized target
        step_preds = []
        step_alphas = []
        for t in range(tau):
            context, alphas = self.attention(h, enc_seq)
            parts = [Tensor(batch.dec_reals[:, t, :])]
            for j, embed in enumerate(self.cat_embeds):
                parts.append(embed(batch.dec_cats[:, t, j]))
            parts += statics + [context, prev]
            h, c = self.decoder.step(T.concat(parts, axis=1), h, c)
            pred_t = self.head(T.dropout(h, self.dec_dropout, rng, train))
            step_preds.append(pred_t)
            step_alphas.append(T.reshape(alphas, (b, 1, k)))
            prev = pred_t
        predictions = T.concat(step_preds, axis=1)
        attention = T.concat(step_alphas, axis=1)
        return predictions, attention

    def loss(self, batch: Batch, train: bool = True, rng=None):
        pred, _ = self.forward(batch, train=train, rng=rng)
        return mse_loss(pred, batch.target)

    def predict(self, batch: Batch, rng=None) -> ForecastOutput:
        with T.no_grad():
            pred, attention = self.forward(batch, train=False)
        return ForecastOutput(
            predictions=pred.data[:, :, None],
            quantiles=(0.5,),
            attention=attention.data,
        )
