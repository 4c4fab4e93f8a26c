"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is built eagerly: every operation records its parent tensors and a
backward closure, and ``backward()`` replays the closures in reverse
topological order (iteratively, so deep recurrent graphs do not hit the
recursion limit). Storage is row-major float64 throughout. Broadcasting is
deliberately restricted: elementwise operations require identical shapes,
except that ``add``/``sub`` accept a 1-D bias against the last axis, and
python scalars are always accepted as constants.

A ``grad`` of ``None`` means zero: backward only touches tensors that
participate in the loss graph.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DataError, NumericError, ShapeError

_DEBUG = False
_GRAD_ENABLED = True


def set_debug(enabled: bool) -> None:
    """Enable NaN/Inf detection on every tensor produced (slow, for tests)."""
    global _DEBUG
    _DEBUG = bool(enabled)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (forward values only)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if _DEBUG and not np.all(np.isfinite(arr)):
            raise NumericError("tensor initialized with non-finite values")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def values(self):
        """Flat row-major view of the stored values."""
        return self.data.reshape(-1)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() expects a scalar, got shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; constants are python numbers, never silently broadcast
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _result(data: np.ndarray, parents, backward_fn) -> Tensor:
    if _DEBUG and not np.all(np.isfinite(data)):
        raise NumericError("operation produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tensor the scalar ``loss`` depends on."""
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    # Iterative postorder DFS. A node must only be marked seen when it is
    # expanded, not when pushed: a node pushed early can be reached again
    # through a deeper path, and emitting it at first push would order it
    # before consumers that still owe it gradient.
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Tensor, b):
    if isinstance(b, (int, float)):
        data = a.data + b

        def back(g):
            _accumulate(a, g)

        return _result(data, (a,), back)
    if not isinstance(b, Tensor):
        raise ShapeError(f"add expects a Tensor or scalar, got {type(b).__name__}")
    if a.shape == b.shape:
        data = a.data + b.data

        def back(g):
            _accumulate(a, g)
            _accumulate(b, g)

        return _result(data, (a, b), back)
    if b.ndim == 1 and a.ndim >= 2 and a.shape[-1] == b.shape[0]:
        # bias-row addition, the one permitted broadcast
        data = a.data + b.data
        n = b.shape[0]

        def back(g):
            _accumulate(a, g)
            _accumulate(b, g.reshape(-1, n).sum(axis=0))

        return _result(data, (a, b), back)
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b):
    if isinstance(b, (int, float)):
        return add(a, -b)
    return add(a, neg(b))


def neg(a: Tensor):
    def back(g):
        _accumulate(a, -g)

    return _result(-a.data, (a,), back)


def mul(a: Tensor, b):
    if isinstance(b, (int, float)):
        data = a.data * b

        def back(g):
            _accumulate(a, g * b)

        return _result(data, (a,), back)
    if not isinstance(b, Tensor):
        raise ShapeError(f"mul expects a Tensor or scalar, got {type(b).__name__}")
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")
    data = a.data * b.data

    def back(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _result(data, (a, b), back)


def div(a: Tensor, b):
    if isinstance(b, (int, float)):
        return mul(a, 1.0 / b)
    if not isinstance(b, Tensor):
        raise ShapeError(f"div expects a Tensor or scalar, got {type(b).__name__}")
    if a.shape != b.shape:
        raise ShapeError(f"div: incompatible shapes {a.shape} and {b.shape}")
    data = a.data / b.data

    def back(g):
        _accumulate(a, g / b.data)
        _accumulate(b, -g * a.data / (b.data * b.data))

    return _result(data, (a, b), back)


def maximum(a: Tensor, b: Tensor):
    """Elementwise max; ties route the gradient to the first operand."""
    if a.shape != b.shape:
        raise ShapeError(f"maximum: incompatible shapes {a.shape} and {b.shape}")
    take_a = a.data >= b.data
    data = np.where(take_a, a.data, b.data)

    def back(g):
        _accumulate(a, g * take_a)
        _accumulate(b, g * ~take_a)

    return _result(data, (a, b), back)


# ---------------------------------------------------------------------------
# matrix products

def matmul(a: Tensor, b: Tensor):
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D tensors, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    data = a.data @ b.data

    def back(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(data, (a, b), back)


def bmm(a: Tensor, b: Tensor):
    """Batched matrix product of (B,m,k) with (B,k,n)."""
    if a.ndim != 3 or b.ndim != 3:
        raise ShapeError(f"bmm expects 3-D tensors, got shapes {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ShapeError(f"bmm: incompatible shapes {a.shape} and {b.shape}")
    data = a.data @ b.data

    def back(g):
        _accumulate(a, g @ np.swapaxes(b.data, -1, -2))
        _accumulate(b, np.swapaxes(a.data, -1, -2) @ g)

    return _result(data, (a, b), back)


def transpose_last(a: Tensor):
    """Swap the last two axes."""
    if a.ndim < 2:
        raise ShapeError(f"transpose_last expects ndim >= 2, got shape {a.shape}")
    data = np.ascontiguousarray(np.swapaxes(a.data, -1, -2))

    def back(g):
        _accumulate(a, np.swapaxes(g, -1, -2))

    return _result(data, (a,), back)


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(a: Tensor, shape):
    shape = tuple(shape)
    data = a.data.reshape(shape)
    original = a.shape

    def back(g):
        _accumulate(a, g.reshape(original))

    return _result(data, (a,), back)


def narrow(a: Tensor, axis: int, start: int, length: int):
    """Contiguous slice ``[start, start+length)`` along ``axis``."""
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"narrow: axis {axis} invalid for shape {a.shape}")
    axis = axis % a.ndim
    if start < 0 or length < 1 or start + length > a.shape[axis]:
        raise ShapeError(f"narrow: range [{start},{start + length}) invalid for shape {a.shape}")
    index = tuple(slice(start, start + length) if d == axis else slice(None) for d in range(a.ndim))
    data = a.data[index].copy()

    def back(g):
        padded = np.zeros_like(a.data)
        padded[index] = g
        _accumulate(a, padded)

    return _result(data, (a,), back)


def concat(tensors, axis: int = 0):
    tensors = list(tensors)
    if not tensors:
        raise ContractError("concat of an empty sequence")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def back(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            index = tuple(
                slice(offset, offset + size) if d == axis % g.ndim else slice(None)
                for d in range(g.ndim)
            )
            _accumulate(t, g[index])
            offset += size

    return _result(data, tuple(tensors), back)


def repeat_rows(a: Tensor, n: int):
    """Repeat each row of a 2-D tensor ``n`` times consecutively."""
    if a.ndim != 2:
        raise ShapeError(f"repeat_rows expects a 2-D tensor, got shape {a.shape}")
    rows, cols = a.shape
    data = np.repeat(a.data, n, axis=0)

    def back(g):
        _accumulate(a, g.reshape(rows, n, cols).sum(axis=1))

    return _result(data, (a,), back)


def embedding(weight: Tensor, indices):
    """Select rows of ``weight`` by integer index; gradients scatter back."""
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= weight.shape[0]):
        raise DataError(
            f"embedding index out of vocabulary (size {weight.shape[0]}): "
            f"range [{idx.min()}, {idx.max()}]"
        )
    dim = weight.shape[1]
    data = weight.data[idx]

    def back(g):
        dw = np.zeros_like(weight.data)
        np.add.at(dw, idx.reshape(-1), g.reshape(-1, dim))
        _accumulate(weight, dw)

    return _result(data, (weight,), back)


# ---------------------------------------------------------------------------
# reductions

def tsum(a: Tensor, axis=None):
    if axis is None:
        data = np.asarray(a.data.sum())

        def back(g):
            _accumulate(a, np.broadcast_to(g, a.shape))

        return _result(data, (a,), back)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"sum: axis {axis} invalid for shape {a.shape}")
    data = a.data.sum(axis=axis)

    def back(g):
        _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _result(data, (a,), back)


def tmean(a: Tensor, axis=None):
    count = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / count)


# ---------------------------------------------------------------------------
# pointwise nonlinearities

def exp(a: Tensor):
    data = np.exp(a.data)

    def back(g):
        _accumulate(a, g * data)

    return _result(data, (a,), back)


def log(a: Tensor):
    with np.errstate(invalid="ignore", divide="ignore"):
        data = np.log(a.data)

    def back(g):
        _accumulate(a, g / a.data)

    return _result(data, (a,), back)


def tanh(a: Tensor):
    data = np.tanh(a.data)

    def back(g):
        _accumulate(a, g * (1.0 - data * data))

    return _result(data, (a,), back)


def _sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor):
    data = _sigmoid_array(a.data)

    def back(g):
        _accumulate(a, g * data * (1.0 - data))

    return _result(data, (a,), back)


def relu(a: Tensor):
    data = np.maximum(a.data, 0.0)

    def back(g):
        _accumulate(a, g * (a.data > 0))

    return _result(data, (a,), back)


def elu(a: Tensor):
    neg_mask = a.data < 0
    data = a.data.copy()
    data[neg_mask] = np.expm1(a.data[neg_mask])

    def back(g):
        deriv = np.ones_like(a.data)
        deriv[neg_mask] = data[neg_mask] + 1.0
        _accumulate(a, g * deriv)

    return _result(data, (a,), back)


def softplus(a: Tensor):
    data = np.logaddexp(0.0, a.data)

    def back(g):
        _accumulate(a, g * _sigmoid_array(a.data))

    return _result(data, (a,), back)


# ---------------------------------------------------------------------------
# normalizations

def softmax(a: Tensor, axis: int):
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(a, data * (g - inner))

    return _result(data, (a,), back)


def masked_softmax(a: Tensor, mask: np.ndarray):
    """Softmax over the last axis restricted to positions where ``mask`` is True.

    Masked positions get exactly zero weight and pass no gradient, so outputs
    are bit-exactly invariant to the masked inputs. Every row must keep at
    least one unmasked position.
    """
    mask = np.asarray(mask)
    if mask.dtype != np.bool_:
        raise ContractError(f"masked_softmax: mask must be boolean, got dtype {mask.dtype}")
    try:
        mask = np.broadcast_to(mask, a.shape)
    except ValueError:
        raise ShapeError(f"masked_softmax: mask shape {mask.shape} incompatible with {a.shape}") from None
    if not mask.any(axis=-1).all():
        raise ContractError("masked_softmax: a row is fully masked")
    guarded = np.where(mask, a.data, -np.inf)
    shifted = guarded - guarded.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        inner = (g * data).sum(axis=-1, keepdims=True)
        _accumulate(a, data * (g - inner))

    return _result(data, (a,), back)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5):
    """Normalize the last axis to zero mean, unit population variance, then affine."""
    n = a.shape[-1]
    if gain.shape != (n,) or bias.shape != (n,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gain.shape}/{bias.shape} must be ({n},) for input {a.shape}"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    var = ((a.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    data = xhat * gain.data + bias.data

    def back(g):
        lead = tuple(range(g.ndim - 1))
        _accumulate(gain, (g * xhat).sum(axis=lead))
        _accumulate(bias, g.sum(axis=lead))
        dxhat = g * gain.data
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accumulate(a, term * inv)

    return _result(data, (a, gain, bias), back)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None, train: bool):
    """Inverted dropout: scales kept units by 1/(1-p) at train time, identity at eval."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    if rng is None:
        raise ContractError("dropout at train time needs a random generator")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    data = a.data * keep

    def back(g):
        _accumulate(a, g * keep)

    return _result(data, (a,), back)


# ---------------------------------------------------------------------------
# verification oracle

def finite_diff_grad(f, x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of ``x``.

    ``f`` is re-evaluated with each coordinate of ``x`` perturbed by ±h, so it
    must read ``x`` afresh on every call. Returns an array shaped like ``x``.
    """
    if h <= 0:
        raise ContractError(f"finite_diff_grad step must be positive, got {h}")
    original = x.data.copy()
    flat = x.data.reshape(-1)
    grad = np.zeros_like(flat)
    try:
        with no_grad():
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + h
                up = _as_scalar(f(x))
                flat[i] = saved - h
                down = _as_scalar(f(x))
                flat[i] = saved
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise NumericError(f"finite_diff_grad: non-finite evaluation at coordinate {i}")
                grad[i] = (up - down) / (2.0 * h)
    finally:
        x.data[...] = original
    return grad.reshape(x.shape)


def _as_scalar(value) -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    """Moment estimates and hyperparameters for one parameter list."""

    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 1e-3


def adam_init(params, learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    return AdamState(
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
        step_count=0,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        learning_rate=learning_rate,
    )


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError(
            f"adam_step: got {len(params)} params, {len(grads)} grads, "
            f"{len(state.first_moment)} moment slots"
        )
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ShapeError(f"adam_step: param shape {p.shape} does not match grad shape {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
    return params, state


class Adam:
    """Adam over a list of parameter Tensors; ``grad is None`` counts as zero."""

    def __init__(self, params, learning_rate: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.state = adam_init([p.data for p in self.params], learning_rate, beta1, beta2, epsilon)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step([p.data for p in self.params], grads, self.state)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
