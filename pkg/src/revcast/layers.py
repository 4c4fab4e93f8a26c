"""Neural building blocks shared by all forecasting models.

Linear / embedding / LSTM cell are the usual constructions. The gated
residual network (GRN), variable selection network (VSN) and interpretable
multi-head attention follow the temporal-fusion architecture: gating lets a
block collapse to a plain normalized skip connection, variable selection
produces per-step softmax weights over per-variable nonlinear embeddings,
and attention heads share one value projection so their weights average
into a single attention matrix.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor


class Linear:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = T.add(out, self.bias)
        return out

    def parameters(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]


class Embedding:
    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(dim)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(vocab_size, dim)), requires_grad=True)

    def __call__(self, indices) -> Tensor:
        return T.embedding(self.weight, indices)

    def parameters(self):
        return [self.weight]


class Glu:
    """Gated linear unit: sigmoid(W_g x + b_g) * (W_l x + b_l)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.gate = Linear(in_dim, out_dim, rng)
        self.linear = Linear(in_dim, out_dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return T.mul(T.sigmoid(self.gate(x)), self.linear(x))

    def parameters(self):
        return self.gate.parameters() + self.linear.parameters()


class Grn:
    """Gated residual network.

    out = LayerNorm(resize(a) + GLU(W1 ELU(W2 a + W3 c + b2) + b1)); when the
    GLU gate saturates closed the block degrades to LayerNorm(resize(a)), so
    the network can skip nonlinear processing entirely. The context
    projection exists only when ``context_dim`` is given, and ``resize`` is a
    bias-free projection used only on a width mismatch.
    """

    def __init__(self, input_dim: int, hidden_dim: int, output_dim: int,
                 rng: np.random.Generator, context_dim: int | None = None,
                 dropout: float = 0.0):
        self.input_proj = Linear(input_dim, hidden_dim, rng)
        self.context_proj = Linear(context_dim, hidden_dim, rng, bias=False) if context_dim else None
        self.inner_proj = Linear(hidden_dim, hidden_dim, rng)
        self.glu = Glu(hidden_dim, output_dim, rng)
        self.skip_proj = Linear(input_dim, output_dim, rng, bias=False) if input_dim != output_dim else None
        self.ln_gain = Tensor(np.ones(output_dim), requires_grad=True)
        self.ln_bias = Tensor(np.zeros(output_dim), requires_grad=True)
        self.dropout = dropout

    def __call__(self, a: Tensor, context: Tensor | None = None,
                 train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        if (context is None) != (self.context_proj is None):
            raise ContractError(
                "context supplied to a context-free GRN"
                if self.context_proj is None else "GRN expects a context input"
            )
        hidden = self.input_proj(a)
        if context is not None:
            hidden = T.add(hidden, self.context_proj(context))
        eta = self.inner_proj(T.elu(hidden))
        eta = T.dropout(eta, self.dropout, rng, train)
        skip = a if self.skip_proj is None else self.skip_proj(a)
        return T.layer_norm(T.add(skip, self.glu(eta)), self.ln_gain, self.ln_bias)

    def parameters(self):
        params = self.input_proj.parameters()
        if self.context_proj is not None:
            params += self.context_proj.parameters()
        params += self.inner_proj.parameters() + self.glu.parameters()
        if self.skip_proj is not None:
            params += self.skip_proj.parameters()
        return params + [self.ln_gain, self.ln_bias]


class LstmCell:
    """Single LSTM cell with separate input-path and recurrent-path biases."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(hidden_dim)
        self.hidden_dim = hidden_dim
        self.w_ih = Tensor(rng.uniform(-bound, bound, size=(input_dim, 4 * hidden_dim)), requires_grad=True)
        self.w_hh = Tensor(rng.uniform(-bound, bound, size=(hidden_dim, 4 * hidden_dim)), requires_grad=True)
        self.b_ih = Tensor(np.zeros(4 * hidden_dim), requires_grad=True)
        self.b_hh = Tensor(np.zeros(4 * hidden_dim), requires_grad=True)

    def step(self, x: Tensor, h: Tensor, c: Tensor):
        d = self.hidden_dim
        gates = T.add(T.add(T.matmul(x, self.w_ih), T.matmul(h, self.w_hh)),
                      T.add(self.b_ih, self.b_hh))
        i = T.sigmoid(T.narrow(gates, 1, 0, d))
        f = T.sigmoid(T.narrow(gates, 1, d, d))
        g = T.tanh(T.narrow(gates, 1, 2 * d, d))
        o = T.sigmoid(T.narrow(gates, 1, 3 * d, d))
        c_new = T.add(T.mul(f, c), T.mul(i, g))
        h_new = T.mul(o, T.tanh(c_new))
        return h_new, c_new

    def parameters(self):
        return [self.w_ih, self.w_hh, self.b_ih, self.b_hh]


class LstmStack:
    """Stacked LSTM layers unrolled over a python list of per-step inputs."""

    def __init__(self, input_dim: int, hidden_dim: int, num_layers: int,
                 rng: np.random.Generator, dropout: float = 0.0):
        self.cells = [
            LstmCell(input_dim if l == 0 else hidden_dim, hidden_dim, rng)
            for l in range(num_layers)
        ]
        self.hidden_dim = hidden_dim
        self.dropout = dropout

    def unroll(self, steps, init_states=None, train: bool = False,
               rng: np.random.Generator | None = None):
        """Returns (top-layer outputs per step, final (h, c) per layer)."""
        batch = steps[0].shape[0]
        if init_states is None:
            zero = lambda: Tensor(np.zeros((batch, self.hidden_dim)))
            states = [(zero(), zero()) for _ in self.cells]
        else:
            states = list(init_states)
        outputs = []
        for x in steps:
            inp = x
            for l, cell in enumerate(self.cells):
                h, c = cell.step(inp, *states[l])
                states[l] = (h, c)
                inp = h
                if l < len(self.cells) - 1:
                    inp = T.dropout(inp, self.dropout, rng, train)
            outputs.append(inp)
        return outputs, states

    def parameters(self):
        return [p for cell in self.cells for p in cell.parameters()]


class Vsn:
    """Variable selection network over ``m`` input variables.

    Each variable is embedded to the hidden width (a linear map for reals, a
    lookup table for categoricals) and passed through its own GRN; a
    selection GRN over the flattened embeddings produces softmax weights that
    combine the per-variable outputs. Weights are the feature-importance
    signal.
    """

    def __init__(self, variables, hidden_dim: int, rng: np.random.Generator,
                 context_dim: int | None = None, dropout: float = 0.0):
        """``variables`` is a list of ("real", None) or ("cat", vocab_size)."""
        if not variables:
            raise ContractError("VSN needs at least one variable")
        self.m = len(variables)
        self.hidden_dim = hidden_dim
        self.transforms = []
        for kind, vocab in variables:
            if kind == "real":
                self.transforms.append(Linear(1, hidden_dim, rng))
            elif kind == "cat":
                self.transforms.append(Embedding(vocab, hidden_dim, rng))
            else:
                raise ConfigError(f"unknown variable kind {kind!r}")
        self.var_grns = [Grn(hidden_dim, hidden_dim, hidden_dim, rng, dropout=dropout)
                         for _ in variables]
        self.selection_grn = Grn(self.m * hidden_dim, hidden_dim, self.m, rng,
                                 context_dim=context_dim, dropout=dropout)

    def __call__(self, inputs, context: Tensor | None = None,
                 train: bool = False, rng: np.random.Generator | None = None):
        """``inputs``: per variable, a (N,1) Tensor for reals or an int array for cats.

        Returns (combined (N,d), weights (N,m)).
        """
        if len(inputs) != self.m:
            raise ShapeError(f"VSN expects {self.m} inputs, got {len(inputs)}")
        embedded = []
        for transform, value in zip(self.transforms, inputs):
            if isinstance(transform, Embedding):
                embedded.append(transform(np.asarray(value)))
            else:
                embedded.append(transform(value))
        flat = T.concat(embedded, axis=1)
        logits = self.selection_grn(flat, context, train=train, rng=rng)
        weights = T.softmax(logits, axis=1)
        processed = [
            T.reshape(grn(e, train=train, rng=rng), (-1, 1, self.hidden_dim))
            for grn, e in zip(self.var_grns, embedded)
        ]
        stacked = T.concat(processed, axis=1)
        n = flat.shape[0]
        combined = T.bmm(T.reshape(weights, (n, 1, self.m)), stacked)
        return T.reshape(combined, (n, self.hidden_dim)), weights

    def parameters(self):
        params = []
        for transform in self.transforms:
            params += transform.parameters()
        for grn in self.var_grns:
            params += grn.parameters()
        return params + self.selection_grn.parameters()


class BahdanauAttention:
    """Additive attention: scores v.tanh(W_q q + W_k h_t), softmax over steps."""

    def __init__(self, enc_dim: int, dec_dim: int, attn_dim: int, rng: np.random.Generator):
        self.query_proj = Linear(dec_dim, attn_dim, rng, bias=False)
        self.key_proj = Linear(enc_dim, attn_dim, rng, bias=False)
        self.score_proj = Linear(attn_dim, 1, rng, bias=False)

    def __call__(self, dec_state: Tensor, enc_states: Tensor):
        """dec_state (B,d_dec), enc_states (B,k,d_enc) -> (context (B,d_enc), alphas (B,k))."""
        batch, k, enc_dim = enc_states.shape
        keys = self.key_proj(T.reshape(enc_states, (batch * k, enc_dim)))
        query = T.repeat_rows(self.query_proj(dec_state), k)
        scores = self.score_proj(T.tanh(T.add(keys, query)))
        alphas = T.softmax(T.reshape(scores, (batch, k)), axis=1)
        context = T.bmm(T.reshape(alphas, (batch, 1, k)), enc_states)
        return T.reshape(context, (batch, enc_dim)), alphas

    def parameters(self):
        return (self.query_proj.parameters() + self.key_proj.parameters()
                + self.score_proj.parameters())


class InterpretableMultiHeadAttention:
    """Multi-head attention whose heads share one value projection.

    Per head: A_h = softmax(mask(Q_h K_h^T / sqrt(d_attn))); the head output
    is A_h (V W_V) with the same W_V for every head, so the per-head
    attention matrices can be averaged into a single interpretable one. The
    output projection acts on the mean of the head outputs.
    """

    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator,
                 dropout: float = 0.0):
        if d_model % n_heads != 0:
            raise ConfigError(f"attention width {d_model} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.d_attn = d_model // n_heads
        self.q_projs = [Linear(d_model, self.d_attn, rng, bias=False) for _ in range(n_heads)]
        self.k_projs = [Linear(d_model, self.d_attn, rng, bias=False) for _ in range(n_heads)]
        self.v_proj = Linear(d_model, self.d_attn, rng, bias=False)
        self.out_proj = Linear(self.d_attn, d_model, rng)
        self.dropout = dropout

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray,
                 train: bool = False, rng: np.random.Generator | None = None):
        """q (B,Tq,d), k/v (B,Tk,d), mask (Tq,Tk) bool.

        Returns (out (B,Tq,d), mean attention (B,Tq,Tk) as a plain array).
        """
        batch, t_q, d_model = q.shape
        t_k = k.shape[1]
        mask = np.asarray(mask)
        if mask.shape != (t_q, t_k) or mask.dtype != np.bool_:
            raise ContractError(
                f"attention mask must be boolean of shape ({t_q}, {t_k}), "
                f"got {mask.dtype} {mask.shape}"
            )
        q_flat = T.reshape(q, (batch * t_q, d_model))
        k_flat = T.reshape(k, (batch * t_k, d_model))
        v_flat = T.reshape(v, (batch * t_k, d_model))
        values = T.reshape(self.v_proj(v_flat), (batch, t_k, self.d_attn))
        scale = 1.0 / np.sqrt(self.d_attn)
        head_sum = None
        attn_sum = None
        for q_proj, k_proj in zip(self.q_projs, self.k_projs):
            q_h = T.reshape(q_proj(q_flat), (batch, t_q, self.d_attn))
            k_h = T.reshape(k_proj(k_flat), (batch, t_k, self.d_attn))
            scores = T.mul(T.bmm(q_h, T.transpose_last(k_h)), scale)
            attn = T.masked_softmax(scores, mask)
            head = T.bmm(attn, values)
            head_sum = head if head_sum is None else T.add(head_sum, head)
            attn_sum = attn.data.copy() if attn_sum is None else attn_sum + attn.data
        mean_head = T.mul(head_sum, 1.0 / self.n_heads)
        out = self.out_proj(T.reshape(mean_head, (batch * t_q, self.d_attn)))
        out = T.dropout(out, self.dropout, rng, train)
        return T.reshape(out, (batch, t_q, d_model)), attn_sum / self.n_heads

    def parameters(self):
        params = []
        for proj in self.q_projs + self.k_projs:
            params += proj.parameters()
        return params + self.v_proj.parameters() + self.out_proj.parameters()


def causal_mask(t_total: int, t_decode: int) -> np.ndarray:
    """Boolean (t_decode, t_total) mask: decode position t attends positions <= t.

    Row i corresponds to absolute position ``t_total - t_decode + i``; with
    ``t_decode == t_total`` this is the full lower-triangular mask.
    """
    if t_decode > t_total or t_decode < 1:
        raise ContractError(f"causal_mask: t_decode {t_decode} invalid for t_total {t_total}")
    offset = t_total - t_decode
    cols = np.arange(t_total)
    rows = offset + np.arange(t_decode)
    return cols[None, :] <= rows[:, None]
