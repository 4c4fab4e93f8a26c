"""Temporal fusion forecaster.

Pipeline: per-step variable selection over encoder and decoder inputs
(conditioned on a static context), a seq2seq LSTM pass for locality
enhancement (encoder states initialized from static contexts, decoder from
the last encoder states), gated residual recombination, static enrichment,
causally masked interpretable multi-head attention queried at the decode
positions, a position-wise feed-forward block shared across steps, and a
final gated residual that lets the locality-enhanced features skip the
attention stack entirely. The head emits one value per configured quantile.
"""
from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..layers import (
    Glu,
    Grn,
    InterpretableMultiHeadAttention,
    Linear,
    LstmCell,
    Vsn,
    causal_mask,
)
from ..losses import quantile_loss
from ..tensor import Tensor
from .base import Batch, Forecaster, ForecastOutput


class GateAddNorm:
    """LayerNorm(skip + GLU(dropout(x))), the gating wrapper used between blocks."""

    def __init__(self, dim: int, rng: np.random.Generator, dropout: float = 0.0):
        self.glu = Glu(dim, dim, rng)
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.dropout = dropout

    def __call__(self, x, skip, train=False, rng=None):
        gated = self.glu(T.dropout(x, self.dropout, rng, train))
        return T.layer_norm(T.add(skip, gated), self.gain, self.bias)

    def parameters(self):
        return self.glu.parameters() + [self.gain, self.bias]


class TemporalFusionTransformer(Forecaster):
    kind = "tft"

    def __init__(self, config, schema, seed: int = 0):
        super().__init__(config, schema)
        rng = np.random.default_rng(seed)
        d = config.hidden_size
        p = config.dropout

        static_vars = [("cat", vocab) for _, vocab in schema.static_cats]
        self.static_vsn = Vsn(static_vars, d, rng, dropout=p)
        # static contexts: variable selection, enrichment, LSTM initial h and c
        self.ctx_selection = Grn(d, d, d, rng, dropout=p)
        self.ctx_enrichment = Grn(d, d, d, rng, dropout=p)
        self.ctx_state_h = Grn(d, d, d, rng, dropout=p)
        self.ctx_state_c = Grn(d, d, d, rng, dropout=p)

        n_known_cats = [vocab for _, vocab in schema.known_cats]
        encoder_vars = [("real", None)] * schema.n_encoder_reals + [("cat", v) for v in n_known_cats]
        decoder_vars = [("real", None)] * len(schema.known_reals) + [("cat", v) for v in n_known_cats]
        self.encoder_vsn = Vsn(encoder_vars, d, rng, context_dim=d, dropout=p)
        self.decoder_vsn = Vsn(decoder_vars, d, rng, context_dim=d, dropout=p)

        self.encoder_lstm = LstmCell(d, d, rng)
        self.decoder_lstm = LstmCell(d, d, rng)
        self.lstm_gate = GateAddNorm(d, rng, dropout=p)
        self.enrichment = Grn(d, d, d, rng, context_dim=d, dropout=p)
        self.attention = InterpretableMultiHeadAttention(d, config.heads, rng)
        self.attention_gate = GateAddNorm(d, rng, dropout=p)
        self.positionwise = Grn(d, d, d, rng, dropout=p)
        self.final_gate = GateAddNorm(d, rng, dropout=p)
        self.head = Linear(d, len(config.quantiles), rng)

    def parameters(self):
        blocks = [
            self.static_vsn, self.ctx_selection, self.ctx_enrichment,
            self.ctx_state_h, self.ctx_state_c,
            self.encoder_vsn, self.decoder_vsn,
            self.encoder_lstm, self.decoder_lstm, self.lstm_gate,
            self.enrichment, self.attention, self.attention_gate,
            self.positionwise, self.final_gate, self.head,
        ]
        return [p for block in blocks for p in block.parameters()]

    def _vsn_inputs(self, reals: np.ndarray, cats: np.ndarray):
        """Split (B,T,*) arrays into flattened per-variable VSN inputs."""
        b, t, n_reals = reals.shape
        inputs = [Tensor(reals[:, :, j].reshape(b * t, 1)) for j in range(n_reals)]
        for j in range(cats.shape[2]):
            inputs.append(cats[:, :, j].reshape(b * t))
        return inputs

    def forward(self, batch: Batch, train: bool = False, rng=None):
        self.check_batch(batch)
        b = batch.size
        k, tau = self.config.lookback, self.config.horizon
        total = k + tau
        d = self.config.hidden_size

        static_inputs = [batch.statics[:, j] for j in range(batch.statics.shape[1])]
        static_encoding, static_weights = self.static_vsn(static_inputs, train=train, rng=rng)
        c_selection = self.ctx_selection(static_encoding, train=train, rng=rng)
        c_enrichment = self.ctx_enrichment(static_encoding, train=train, rng=rng)
        state_h = self.ctx_state_h(static_encoding, train=train, rng=rng)
        state_c = self.ctx_state_c(static_encoding, train=train, rng=rng)

        enc_combined, enc_weights = self.encoder_vsn(
            self._vsn_inputs(batch.enc_reals, batch.enc_cats),
            context=T.repeat_rows(c_selection, k), train=train, rng=rng)
        dec_combined, dec_weights = self.decoder_vsn(
            self._vsn_inputs(batch.dec_reals, batch.dec_cats),
            context=T.repeat_rows(c_selection, tau), train=train, rng=rng)

        enc_seq = T.reshape(enc_combined, (b, k, d))
        dec_seq = T.reshape(dec_combined, (b, tau, d))

        h, c = state_h, state_c
        lstm_steps = []
        for t_idx in range(k):
            x = T.reshape(T.narrow(enc_seq, 1, t_idx, 1), (b, d))
            h, c = self.encoder_lstm.step(x, h, c)
            lstm_steps.append(T.reshape(h, (b, 1, d)))
        for t_idx in range(tau):
            x = T.reshape(T.narrow(dec_seq, 1, t_idx, 1), (b, d))
            h, c = self.decoder_lstm.step(x, h, c)
            lstm_steps.append(T.reshape(h, (b, 1, d)))
        lstm_flat = T.reshape(T.concat(lstm_steps, axis=1), (b * total, d))
        vsn_flat = T.reshape(T.concat([enc_seq, dec_seq], axis=1), (b * total, d))

        temporal = self.lstm_gate(lstm_flat, vsn_flat, train=train, rng=rng)
        enriched = self.enrichment(temporal, context=T.repeat_rows(c_enrichment, total),
                                   train=train, rng=rng)

        enriched_seq = T.reshape(enriched, (b, total, d))
        queries = T.narrow(enriched_seq, 1, k, tau)
        mask = causal_mask(total, tau)
        attn_out, attn_matrix = self.attention(queries, enriched_seq, enriched_seq, mask,
                                               train=train, rng=rng)

        attn_flat = T.reshape(attn_out, (b * tau, d))
        enriched_dec = T.reshape(queries, (b * tau, d))
        x = self.attention_gate(attn_flat, enriched_dec, train=train, rng=rng)
        ff = self.positionwise(x, train=train, rng=rng)
        temporal_dec = T.reshape(T.narrow(T.reshape(temporal, (b, total, d)), 1, k, tau),
                                 (b * tau, d))
        final = self.final_gate(ff, temporal_dec, train=train, rng=rng)
        predictions = T.reshape(self.head(final), (b, tau, len(self.config.quantiles)))

        return {
            "predictions": predictions,
            "encoder_weights": T.reshape(enc_weights, (b, k, self.encoder_vsn.m)),
            "decoder_weights": T.reshape(dec_weights, (b, tau, self.decoder_vsn.m)),
            "static_weights": static_weights,
            "attention": attn_matrix,  # (b, tau, total), plain array
        }

    def loss(self, batch: Batch, train: bool = True, rng=None):
        out = self.forward(batch, train=train, rng=rng)
        losses = None
        for qi, q in enumerate(self.config.quantiles):
            pred_q = T.reshape(T.narrow(out["predictions"], 2, qi, 1),
                               (batch.size, self.config.horizon))
            piece = quantile_loss(batch.target, pred_q, q)
            losses = piece if losses is None else T.add(losses, piece)
        return T.mul(losses, 1.0 / len(self.config.quantiles))

    def predict(self, batch: Batch, rng=None) -> ForecastOutput:
        with T.no_grad():
            out = self.forward(batch, train=False)
        b = batch.size
        k, tau = self.config.lookback, self.config.horizon
        total = k + tau
        full_attention = np.zeros((b, total, total))
        full_attention[:, k:, :] = out["attention"]
        return ForecastOutput(
            predictions=out["predictions"].data,
            quantiles=self.config.quantiles,
            attention=full_attention,
            encoder_weights=out["encoder_weights"].data,
            decoder_weights=out["decoder_weights"].data,
            static_weights=out["static_weights"].data,
        )
