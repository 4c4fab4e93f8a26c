"""Independent numpy reference implementations used to check the library.

Everything here is written directly from the defining formulas, without
touching the autodiff graph, so tests compare two genuinely separate code
paths.
"""
import numpy as np

from revcast import tensor as T


def matmul_triple_loop(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for l in range(k):
                acc += a[i, l] * b[l, j]
            out[i, j] = acc
    return out


def np_sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def np_elu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def np_softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def np_layer_norm(x, gain, bias, eps=1e-5):
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def np_linear(x, w, b=None):
    out = np.asarray(x) @ w
    if b is not None:
        out = out + b
    return out


def np_glu(x, w_gate, b_gate, w_lin, b_lin):
    return np_sigmoid(np_linear(x, w_gate, b_gate)) * np_linear(x, w_lin, b_lin)


def np_grn(a, c, p, eps=1e-5):
    """Gated residual block from its weights dict (see grn_weights in test files)."""
    hidden = np_linear(a, p["w_input"], p["b_input"])
    if c is not None:
        hidden = hidden + np_linear(c, p["w_context"])
    eta = np_linear(np_elu(hidden), p["w_inner"], p["b_inner"])
    gated = np_glu(eta, p["w_gate"], p["b_gate"], p["w_lin"], p["b_lin"])
    skip = a if p.get("w_skip") is None else np_linear(a, p["w_skip"])
    return np_layer_norm(skip + gated, p["ln_gain"], p["ln_bias"], eps)


def np_lstm_step(x, h, c, w_ih, w_hh, b_ih, b_hh):
    gates = x @ w_ih + h @ w_hh + b_ih + b_hh
    d = h.shape[-1]
    i = np_sigmoid(gates[..., :d])
    f = np_sigmoid(gates[..., d:2 * d])
    g = np.tanh(gates[..., 2 * d:3 * d])
    o = np_sigmoid(gates[..., 3 * d:])
    c_new = f * c + i * g
    h_new = o * np.tanh(c_new)
    return h_new, c_new


def np_autocorrelation(x, lag):
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    denom = np.dot(x, x)
    if denom == 0:
        return 0.0
    return float(np.dot(x[lag:], x[:-lag]) / denom)


def model_grad_check(model, batch, rng, n_params=8, n_coords=4,
                     rtol=1e-4, atol=1e-6, h=1e-5):
    """Spot-check model parameter gradients against central finite differences.

    Samples a few parameters and a few coordinates from each, which keeps full
    models checkable in well under a second.
    """
    params = model.parameters()
    model.zero_grad()
    loss = model.loss(batch, train=False)
    T.backward(loss)

    def eval_loss():
        with T.no_grad():
            return model.loss(batch, train=False).item()

    chosen = rng.choice(len(params), size=min(n_params, len(params)), replace=False)
    for idx in chosen:
        p = params[idx]
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        coords = rng.choice(flat.size, size=min(n_coords, flat.size), replace=False)
        for c in coords:
            saved = flat[c]
            flat[c] = saved + h
            up = eval_loss()
            flat[c] = saved - h
            down = eval_loss()
            flat[c] = saved
            numeric = (up - down) / (2.0 * h)
            a = analytic.reshape(-1)[c]
            assert abs(a - numeric) <= atol + rtol * abs(numeric), (
                f"param {idx} coord {c}: analytic {a:.6e} vs numeric {numeric:.6e}"
            )


def check_grads(build_loss, inputs, rtol=1e-4, atol=1e-7, h=1e-5):
    """Compare backward() gradients against central finite differences.

    ``build_loss`` maps the list of input Tensors to a scalar Tensor and must
    rebuild the graph on every call. Raises AssertionError on mismatch.
    """
    loss = build_loss(*inputs)
    for t in inputs:
        t.grad = None
    T.backward(loss)
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = T.finite_diff_grad(lambda _x, i=i: build_loss(*inputs), t, h=h)
        err = np.abs(analytic - numeric)
        tol = atol + rtol * np.abs(numeric)
        worst = (err - tol).max()
        assert np.all(err <= tol), (
            f"gradient mismatch on input {i}: max excess {worst:.3e}, "
            f"analytic range [{analytic.min():.3e}, {analytic.max():.3e}]"
        )
