"""Small dense tensors with tape-based reverse-mode differentiation.

Everything is float64 and row-major. There is no broadcasting: every
binary op requires identical shapes (or the usual inner-extent match for
``matmul``), so shape mistakes surface where they are made.

Recording only happens inside an active :class:`Tape`::

    with Tape() as tape:
        loss = cross_entropy_logits(logits_of(x), 1)
    backward(tape, loss)

A tape is single-use. Calling :func:`backward` twice on the same tape
raises :class:`~trifuse.errors.UsageError` instead of silently
accumulating gradients a second time.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, UsageError

__all__ = [
    "Tensor",
    "Tape",
    "tensor",
    "matmul",
    "add",
    "scale",
    "relu",
    "transpose",
    "concat_rows",
    "concat_cols",
    "take_rows",
    "reshape",
    "mean_rows",
    "sum_all",
    "affine",
    "self_attention",
    "softmax_rows",
    "cross_entropy_logits",
    "backward",
    "sgd_step",
    "SGD",
]

_state = threading.local()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if 0 in arr.shape:
            raise DimensionError(f"tensor extents must be positive, got {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._tape = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        t._tape = None
        return t

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.flat[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


class Tape:
    """Ordered record of differentiable operations.

    Entries are appended in execution order, so the list is topologically
    sorted by construction. Not thread-safe; use one tape per thread.
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple, Callable]] = []
        self.spent = False

    def __enter__(self) -> "Tape":
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _state.stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)


def _active_tape():
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


def _result(arr, inputs, rule) -> Tensor:
    """Wrap ``arr`` and record it on the active tape when any input needs grad."""
    needs = False
    for t in inputs:
        if t.requires_grad:
            needs = True
            break
    out = Tensor._wrap(arr, needs)
    if needs:
        tape = _active_tape()
        if tape is not None:
            if tape.spent:
                raise UsageError("cannot record onto a tape that has already been backpropagated")
            out._tape = tape
            tape.nodes.append((out, inputs, rule))
    return out


def _same_shape(op, a: Tensor, b: Tensor):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# -- operations --------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    A, B = a.data, b.data
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {A.shape} by {B.shape}")

    def rule(g):
        return (g @ B.T if a.requires_grad else None, A.T @ g if b.requires_grad else None)

    return _result(A @ B, (a, b), rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {a.shape}")
    return _result(a.data.T.copy(), (a,), lambda g: (g.T,))


def _bounds(extents):
    out, start = [], 0
    for e in extents:
        out.append((start, start + e))
        start += e
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack matrices vertically; all parts must share a column count."""
    parts = tuple(parts)
    if not parts:
        raise DimensionError("concat_rows needs at least one tensor")
    cols = parts[0].data.shape[1]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[1] != cols:
            raise DimensionError(f"concat_rows: column mismatch {parts[0].shape} vs {p.shape}")
    bounds = _bounds([p.data.shape[0] for p in parts])

    def rule(g):
        return tuple(g[i:j] for i, j in bounds)

    return _result(np.concatenate([p.data for p in parts], axis=0), parts, rule)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Join matrices side by side; all parts must share a row count."""
    parts = tuple(parts)
    if not parts:
        raise DimensionError("concat_cols needs at least one tensor")
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise DimensionError(f"concat_cols: row mismatch {parts[0].shape} vs {p.shape}")
    bounds = _bounds([p.data.shape[1] for p in parts])

    def rule(g):
        return tuple(g[:, i:j] for i, j in bounds)

    return _result(np.concatenate([p.data for p in parts], axis=1), parts, rule)


def take_rows(a: Tensor, index: Sequence[int]) -> Tensor:
    idx = np.asarray(index, dtype=np.intp)
    n = a.data.shape[0]
    if idx.ndim != 1 or idx.size == 0 or idx.min() < 0 or idx.max() >= n:
        raise DimensionError(f"take_rows: index {list(index)} out of range for {n} rows")

    distinct = len(set(idx.tolist())) == idx.size

    def rule(g):
        out = np.zeros_like(a.data)
        if distinct:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _result(a.data[idx], (a,), rule)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.data.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.data.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def mean_rows(a: Tensor) -> Tensor:
    """Column-wise mean over rows; (m, n) -> (1, n)."""
    m = a.data.shape[0]
    return _result(a.data.sum(axis=0, keepdims=True) / m, (a,), lambda g: (np.repeat(g / m, m, axis=0),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _result(np.array([[a.data.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` recorded as a single node; ``b`` must match the output shape."""
    X, W, B = x.data, w.data, b.data
    if X.ndim != 2 or W.ndim != 2 or X.shape[1] != W.shape[0]:
        raise DimensionError(f"affine: cannot multiply {X.shape} by {W.shape}")
    if B.shape != (X.shape[0], W.shape[1]):
        raise DimensionError(f"affine: bias shape {B.shape} does not match output {(X.shape[0], W.shape[1])}")

    def rule(g):
        return (g @ W.T if x.requires_grad else None, X.T @ g if w.requires_grad else None, g)

    return _result(X @ W + B, (x, w, b), rule)


def self_attention(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, return_weights: bool = False):
    """Scaled dot-product self-attention over the rows of ``x`` as one node.

    ``softmax_rows((x wq)(x wk)^T / sqrt(d)) @ (x wv)``. Numerically the same
    as composing matmul/transpose/scale/softmax_rows, with a hand-derived
    backward rule.
    """
    X = x.data
    d = wq.data.shape[0]
    for w in (wq, wk, wv):
        if w.data.shape != (d, d):
            raise DimensionError(f"self_attention: projections must all be ({d}, {d}), got {w.shape}")
    if X.ndim != 2 or X.shape[1] != d:
        raise DimensionError(f"self_attention: tokens {X.shape} do not match width {d}")
    c = 1.0 / np.sqrt(d)
    Wq, Wk, Wv = wq.data, wk.data, wv.data
    Q, K, V = X @ Wq, X @ Wk, X @ Wv
    A = _softmax((Q @ K.T) * c)

    def rule(g):
        dV = A.T @ g
        dA = g @ V.T
        dS = A * (dA - (dA * A).sum(axis=1, keepdims=True)) * c
        dQ = dS @ K
        dK = dS.T @ Q
        dX = dQ @ Wq.T + dK @ Wk.T + dV @ Wv.T if x.requires_grad else None
        XT = X.T
        return (dX, XT @ dQ, XT @ dK, XT @ dV)

    out = _result(A @ V, (x, wq, wk, wv), rule)
    return (out, A) if return_weights else out


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with per-row max subtraction."""
    if x.data.ndim != 2:
        raise DimensionError(f"softmax_rows needs a matrix, got shape {x.shape}")
    s = _softmax(x.data)

    def rule(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _result(s, (x,), rule)


def cross_entropy_logits(logits: Tensor, true_class: int) -> Tensor:
    """``-log softmax(logits)[true_class]`` for a single 1xC row of logits."""
    x = logits.data
    if x.ndim != 2 or x.shape[0] != 1:
        raise DimensionError(f"cross_entropy_logits expects a 1xC row, got {x.shape}")
    c = x.shape[1]
    if isinstance(true_class, bool) or not 0 <= int(true_class) < c:
        raise UsageError(f"class index {true_class!r} out of range for {c} classes")
    k = int(true_class)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("cross-entropy got non-finite logits")
    z = x - x.max()
    lse = np.log(np.exp(z).sum())
    loss = lse - z[0, k]
    if not np.isfinite(loss):
        raise NonFiniteError(f"cross-entropy produced {loss}")

    def rule(g):
        p = np.exp(z - lse)
        p[0, k] -= 1.0
        return (p * g[0, 0],)

    return _result(np.array([[max(loss, 0.0)]]), (logits,), rule)


# -- differentiation ---------------------------------------------------------


def backward(tape: Tape, loss: Tensor) -> list[Tensor]:
    """Populate ``.grad`` on every leaf tensor the loss depends on.

    Returns the leaves that received a gradient. Leaves unreachable from
    the loss keep whatever ``.grad`` they had. Grad is overwritten, never
    accumulated across calls.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.spent:
        raise UsageError("tape already used for backward; record a fresh tape")
    if loss._tape is not tape:
        if not loss.requires_grad:
            tape.spent = True
            return []
        raise UsageError("loss was not recorded on this tape")
    tape.spent = True

    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    for out, inputs, rule in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, rule(g)):
            if gi is None or not t.requires_grad:
                continue
            k = id(t)
            prev = grads.get(k)
            grads[k] = gi if prev is None else prev + gi
            if t._tape is None:
                leaves[k] = t

    written = []
    total = 0.0
    for k, t in leaves.items():
        g = grads[k]
        total += g.sum()
        t.grad = g
        written.append(t)
    if not np.isfinite(total):
        bad = [t.shape for t in written if not np.all(np.isfinite(t.grad))]
        if bad:
            raise NonFiniteError(f"non-finite gradients for leaves of shape {bad}")
    tape.nodes.clear()
    return written


# -- optimisation ------------------------------------------------------------


def sgd_step(params, grads, velocities, lr: float, momentum: float) -> None:
    """Classic (heavy-ball) momentum, in place.

    ``v <- momentum * v + g``; ``p <- p - lr * v``. ``params`` are tensors,
    ``grads`` and ``velocities`` are arrays of matching shape.
    """
    if not lr > 0:
        raise UsageError(f"learning rate must be positive, got {lr}")
    if not 0 <= momentum < 1:
        raise UsageError(f"momentum must lie in [0, 1), got {momentum}")
    if not len(params) == len(grads) == len(velocities):
        raise DimensionError("params, grads and velocities differ in length")
    for p, g, v in zip(params, grads, velocities):
        if not p.data.shape == g.shape == v.shape:
            raise DimensionError(f"sgd_step: param {p.data.shape}, grad {g.shape}, velocity {v.shape}")
        v *= momentum
        v += g
        p.data -= lr * v


class SGD:
    """Momentum SGD over a fixed parameter list.

    Parameter data is moved into one contiguous buffer (each tensor keeps a
    view), so an update is three vector operations regardless of how many
    tensors there are. Arithmetic is elementwise-identical to
    :func:`sgd_step`.

    ``lr=0`` is accepted here and means "leave parameters untouched",
    which is handy for sanity runs.
    """

    def __init__(self, params, lr: float = 1e-3, momentum: float = 0.9):
        if lr < 0:
            raise UsageError(f"learning rate must be nonnegative, got {lr}")
        if not 0 <= momentum < 1:
            raise UsageError(f"momentum must lie in [0, 1), got {momentum}")
        self.params = list(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        sizes = [p.data.size for p in self.params]
        self._flat = np.concatenate([p.data.ravel() for p in self.params]) if self.params else np.zeros(0)
        self._velocity = np.zeros_like(self._flat)
        self.velocities = []
        for p, (i, j) in zip(self.params, _bounds(sizes)):
            shape = p.data.shape
            p.data = self._flat[i:j].reshape(shape)
            self.velocities.append(self._velocity[i:j].reshape(shape))

    def step(self) -> None:
        g = np.concatenate([np.zeros(p.data.size) if p.grad is None else p.grad.ravel() for p in self.params])
        v = self._velocity
        v *= self.momentum
        v += g
        if self.lr:
            self._flat -= self.lr * v

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
