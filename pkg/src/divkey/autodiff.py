"""A small reverse-mode autodiff engine over numpy arrays.

Tensors record the operation that produced them together with a closure
that maps the output gradient to input gradients. ``Tensor.backward`` walks
the recorded graph in reverse topological order. Gradients accumulate into
``Parameter.grad`` until an optimizer step zeroes them.

Only the handful of operations the keyphrase model needs are provided.
"""

from __future__ import annotations

import builtins
import contextlib
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ShapeMismatch

class _TapeState(threading.local):
    grad = True
    corrupt = False


_state = _TapeState()


@contextlib.contextmanager
def no_grad():
    prev = _state.grad
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


@contextlib.contextmanager
def corrupted_backward():
    """Deliberately break the sigmoid derivative; negative control for grad checks."""
    prev = _state.corrupt
    _state.corrupt = True
    try:
        yield
    finally:
        _state.corrupt = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self.name = name

    # -- bookkeeping -------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{', grad' if self.requires_grad else ''})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch(f"backward() needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for p, g in zip(node._parents, grads):
                if g is not None and p.requires_grad:
                    p._accumulate(g)
            if not isinstance(node, Parameter):
                node.grad = None  # intermediate grads are not needed once propagated

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, name: str = ""):
        super().__init__(np.array(data, copy=True), requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _state.grad and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from None
    return _result(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    """Pointwise product with numpy broadcasting."""
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}") from None
    return _result(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)

    def backward(g):
        d = s * (1.0 - s)
        if _state.corrupt:
            d = d * 1.01
        return (g * d,)

    return _result(s, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _result(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _result(np.where(pos, a.data, 0).astype(a.dtype), (a,), lambda g: (g * pos,))


# -- shape manipulation ----------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {a.shape} -> {shape}") from None
    return _result(data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor) -> Tensor:
    return _result(a.data.T, (a,), lambda g: (g.T,))


def broadcast_to(a: Tensor, shape) -> Tensor:
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeMismatch(f"broadcast_to: {a.shape} -> {shape}") from None
    return _result(data, (a,), lambda g: (_unbroadcast(g, a.shape),))


def getitem(a: Tensor, key) -> Tensor:
    """Basic or advanced indexing; the backward scatters with ``np.add.at``."""
    data = a.data[key]
    basic = all(k is Ellipsis or k is None or isinstance(k, (slice, int)) for k in (key if isinstance(key, tuple) else (key,)))

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _result(data, (a,), backward)


def take_rows(table: Tensor, ids) -> Tensor:
    """Embedding lookup: rows ``ids`` of a 2-D table."""
    ids = np.asarray(ids, dtype=np.intp)
    if table.data.ndim != 2:
        raise ShapeMismatch(f"take_rows needs a 2-D table, got {table.shape}")
    return getitem(table, ids)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatch("concat: " + ", ".join(str(t.shape) for t in tensors)) from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(data, tensors, backward)


# -- reductions and products ----------------------------------------------

def sum(a: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    data = a.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(data), (a,), backward)


def mean_rows(a: Tensor) -> Tensor:
    """Column means of a matrix (mean over the first axis)."""
    n = a.shape[0]
    if n == 0:
        raise ShapeMismatch("mean_rows of an empty matrix")
    return _result(a.data.mean(axis=0), (a,), lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def matmul(a, b) -> Tensor:
    """``a @ b`` where ``b`` is 2-D and ``a`` has any number of leading axes."""
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    if b.data.ndim != 2 or a.data.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _result(data, (a, b), backward)


# -- normalizers -----------------------------------------------------------

def _masked_logits(x: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return x
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    return np.where(mask, -np.inf, x)


def softmax(a: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis; ``mask`` marks entries forced to exactly 0."""
    z = _masked_logits(a.data, mask)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return _result(p, (a,), backward)


def log_softmax(a: Tensor, mask=None) -> Tensor:
    """Log of :func:`softmax`; masked entries are ``-inf`` and get zero gradient."""
    z = _masked_logits(a.data, mask)
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def backward(g):
        g = np.where(np.isfinite(out), g, 0.0)
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _result(out, (a,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; the identity outside training."""
    if not train or rate <= 0.0:
        return a
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
    return _result(a.data * keep, (a,), lambda g: (g * keep,))


@dataclass
class BatchNormStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.9
    eps: float = 1e-5


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, stats: BatchNormStats, train: bool) -> Tensor:
    """Per-feature normalization over the rows of ``x``.

    In training the row statistics are used and the running averages are
    updated in place; otherwise the running averages make it an affine map.
    """
    if train:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        m = stats.momentum
        stats.mean[...] = m * stats.mean + (1.0 - m) * mu
        stats.var[...] = m * stats.var + (1.0 - m) * var
        inv = 1.0 / np.sqrt(var + stats.eps)
        xhat = (x.data - mu) * inv
        n = x.shape[0]

        def backward(g):
            gxhat = g * gamma.data
            gx = inv / n * (n * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0))
            return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

        out = gamma.data * xhat + beta.data
        return _result(out.astype(x.dtype), (x, gamma, beta), backward)

    inv = (1.0 / np.sqrt(stats.var + stats.eps)).astype(x.dtype)
    xhat = (x.data - stats.mean.astype(x.dtype)) * inv
    out = gamma.data * xhat + beta.data

    def backward(g):
        return g * gamma.data * inv, (g * xhat).sum(axis=0), g.sum(axis=0)

    return _result(out, (x, gamma, beta), backward)


# -- recurrent cell --------------------------------------------------------

@dataclass
class GRUParams:
    """One GRU layer in row-vector convention (``x @ W``).

    ``W`` stacks the input weights of the update, reset and candidate gates,
    ``U_zr`` the recurrent weights of the first two and ``U_h`` the
    candidate's.
    """

    W: Parameter
    U_zr: Parameter
    U_h: Parameter
    b: Parameter

    @property
    def hidden(self) -> int:
        return self.U_h.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.W, self.U_zr, self.U_h, self.b]


def gru_cell(x: Tensor, h: Tensor, p: GRUParams) -> Tensor:
    """z = s(Wz x + Uz h + bz), r = s(Wr x + Ur h + br),
    h~ = tanh(Wh x + Uh (r*h) + bh), h' = (1 - z) h + z h~."""
    d = p.hidden
    if x.shape[-1] != p.W.shape[0] or h.shape[-1] != d:
        raise ShapeMismatch(f"gru_cell: x {x.shape}, h {h.shape}, W {p.W.shape}, U_h {p.U_h.shape}")
    xw = x @ p.W + p.b
    hu = h @ p.U_zr
    z = sigmoid(xw[..., :d] + hu[..., :d])
    r = sigmoid(xw[..., d : 2 * d] + hu[..., d:])
    cand = tanh(xw[..., 2 * d :] + (r * h) @ p.U_h)
    return h + z * (cand - h)


# -- initialization --------------------------------------------------------

def glorot_normal(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None, dtype=np.float32) -> np.ndarray:
    std = math.sqrt(2.0 / (fan_in + fan_out))
    return (rng.standard_normal(shape or (fan_in, fan_out)) * std).astype(dtype)


# -- optimization ----------------------------------------------------------

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: Iterable[Parameter],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, then zero every gradient."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p in params:
        g = p.grad
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
        p.zero_grad()


def global_grad_norm(params: Iterable[Parameter]) -> float:
    return math.sqrt(builtins.sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params))


def clip_gradients(params: Iterable[Parameter], threshold: float) -> float:
    """Rescale all gradients so their joint L2 norm is at most ``threshold``.

    Returns the norm before clipping.
    """
    params = list(params)
    norm = global_grad_norm(params)
    if norm > threshold:
        scale = threshold / norm
        for p in params:
            p.grad *= p.grad.dtype.type(scale)
    return norm



# -- gradient verification -------------------------------------------------

@dataclass
class GradCheckReport:
    max_error: float
    per_param: dict[str, float]

    def __float__(self) -> float:
        return self.max_error


def relative_error(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    eps: float = 1e-5,
    max_coords: int = 64,
    floor: float = 1e-6,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare backprop gradients with central finite differences.

    ``loss_fn`` must be deterministic and return a scalar tensor. At most
    ``max_coords`` coordinates per parameter are probed. Relative errors use
    ``floor`` in the denominator so vanishing gradients compare absolutely.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    analytic = {p.name: p.grad.copy() for p in params}
    for p in params:
        p.zero_grad()

    per_param = {}
    with no_grad():
        for p in params:
            flat = p.data.reshape(-1)
            size = flat.size
            coords = np.arange(size) if size <= max_coords else rng.choice(size, max_coords, replace=False)
            worst = 0.0
            for c in coords:
                orig = flat[c]
                flat[c] = orig + eps
                f_plus = float(loss_fn().data)
                flat[c] = orig - eps
                f_minus = float(loss_fn().data)
                flat[c] = orig
                numeric = (f_plus - f_minus) / (2 * eps)
                worst = max(worst, relative_error(float(analytic[p.name].reshape(-1)[c]), numeric, floor))
            per_param[p.name] = worst
    return GradCheckReport(max(per_param.values(), default=0.0), per_param)
