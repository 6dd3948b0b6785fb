"""Reverse-mode automatic differentiation over dense float64 arrays.

Define-by-run: each op records its inputs and a backward closure on the
output tensor, so the graph is rebuilt on every forward pass and
variable-length inputs need no special handling.  ``backward`` walks the
graph once in reverse topological order and accumulates gradients into
every reachable tensor with ``requires_grad=True``.

Shapes are strict: no implicit broadcasting between tensors.  Everything
is float64 so the finite-difference checks in the tests are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, SequenceTooShortError


class Tensor:
    """Dense float64 array plus the bookkeeping backward() needs."""

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_backward")

    def __init__(self, data, requires_grad=False, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        # Leaves get a zero grad buffer up front so an unused parameter
        # reports an exactly-zero gradient instead of None.
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.op = op
        self.parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __float__(self):
        return self.item()

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self, seed=1.0):
        backward(self, seed)

    def __repr__(self):
        return f"Tensor(shape={list(self.data.shape)}, op={self.op!r})"


def _tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn, op) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = tuple(parents)
        out._backward = backward_fn
    else:
        # Dead branch for autodiff purposes: drop the references so the
        # graph (and peak memory) stays proportional to what training uses.
        out.requires_grad = False
        out.parents = ()
        out._backward = None
    return out


def _accum(t: Tensor, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _topo(root: Tensor):
    """Parents-before-consumers ordering of the graph below ``root``."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    return order


def backward(loss: Tensor, seed=1.0):
    """Accumulate d(loss)/d(leaf) into every reachable requires_grad leaf.

    ``seed`` scales the whole gradient; per-example training uses 1/B so a
    batch-mean gradient builds up across B calls without materializing the
    batch.  Gradients are accumulated, not overwritten: call ``zero_grad``
    on the parameters between steps.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {list(loss.data.shape)}")
    order = _topo(loss)
    _accum(loss, np.full_like(loss.data, float(seed)))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    # Intermediate grad buffers die with the graph; only leaves keep theirs.
    for node in order:
        if node.parents:
            node.grad = None


@dataclass
class OpRecord:
    op: str
    inputs: tuple
    output: Tensor


@dataclass
class ComputationGraph:
    """Flat, topologically ordered view of a recorded graph."""

    nodes: list


def trace(root: Tensor) -> ComputationGraph:
    order = _topo(root)
    index = {id(t): i for i, t in enumerate(order)}
    records = [
        OpRecord(t.op, tuple(index[id(p)] for p in t.parents), t) for t in order
    ]
    return ComputationGraph(records)


# ---------------------------------------------------------------------------
# elementwise and reduction ops


def add(a, b) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add: shapes {a.data.shape} and {b.data.shape} differ")

    def push(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g)

    return _make(a.data + b.data, (a, b), push, "add")


def sub(a, b) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.data.shape != b.data.shape:
        raise DimensionError(f"sub: shapes {a.data.shape} and {b.data.shape} differ")

    def push(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -g)

    return _make(a.data - b.data, (a, b), push, "sub")


def mul(a, b) -> Tensor:
    a, b = _tensor(a), _tensor(b)
    if a.data.shape != b.data.shape:
        raise DimensionError(f"mul: shapes {a.data.shape} and {b.data.shape} differ")

    def push(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return _make(a.data * b.data, (a, b), push, "mul")


def neg(x) -> Tensor:
    x = _tensor(x)

    def push(g):
        if x.requires_grad:
            _accum(x, -g)

    return _make(-x.data, (x,), push, "neg")


def scale(x, c: float) -> Tensor:
    x = _tensor(x)
    c = float(c)

    def push(g):
        if x.requires_grad:
            _accum(x, g * c)

    return _make(x.data * c, (x,), push, "scale")


def add_scalar(x, c: float) -> Tensor:
    x = _tensor(x)

    def push(g):
        if x.requires_grad:
            _accum(x, g)

    return _make(x.data + float(c), (x,), push, "add_scalar")


def log(x) -> Tensor:
    """Natural log; caller guarantees strictly positive input."""
    x = _tensor(x)

    def push(g):
        if x.requires_grad:
            _accum(x, g / x.data)

    return _make(np.log(x.data), (x,), push, "log")


def sum_all(x) -> Tensor:
    x = _tensor(x)

    def push(g):
        if x.requires_grad:
            _accum(x, np.full(x.data.shape, float(g)))

    return _make(np.asarray(x.data.sum()), (x,), push, "sum_all")


def mean_all(x) -> Tensor:
    x = _tensor(x)
    n = x.data.size

    def push(g):
        if x.requires_grad:
            _accum(x, np.full(x.data.shape, float(g) / n))

    return _make(np.asarray(x.data.mean()), (x,), push, "mean_all")


def reshape(x, shape) -> Tensor:
    x = _tensor(x)
    shape = tuple(shape)

    def push(g):
        if x.requires_grad:
            _accum(x, g.reshape(x.data.shape))

    return _make(np.ascontiguousarray(x.data).reshape(shape), (x,), push, "reshape")


def concat(parts) -> Tensor:
    """Concatenate 1-D tensors; the models use it to join feature blocks."""
    parts = [_tensor(p) for p in parts]
    for p in parts:
        if p.data.ndim != 1:
            raise DimensionError(f"concat handles 1-D tensors only, got shape {p.data.shape}")
    sizes = [p.data.size for p in parts]
    offsets = np.cumsum([0] + sizes)

    def push(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _accum(p, g[lo:hi])

    return _make(np.concatenate([p.data for p in parts]), tuple(parts), push, "concat")


# ---------------------------------------------------------------------------
# activations


def relu(x) -> Tensor:
    x = _tensor(x)
    mask = x.data > 0

    def push(g):
        if x.requires_grad:
            _accum(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), push, "relu")


def leaky_relu(x, alpha: float = 0.01) -> Tensor:
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"leaky_relu alpha must be in [0, 1), got {alpha}")
    x = _tensor(x)
    mask = x.data > 0  # slope alpha at exactly 0

    def push(g):
        if x.requires_grad:
            _accum(x, g * np.where(mask, 1.0, alpha))

    return _make(np.where(mask, x.data, alpha * x.data), (x,), push, "leaky_relu")


def sigmoid(x) -> Tensor:
    x = _tensor(x)
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    y[~pos] = ex / (1.0 + ex)

    def push(g):
        if x.requires_grad:
            _accum(x, g * y * (1.0 - y))

    return _make(y, (x,), push, "sigmoid")


def softmax(x, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``; rows sum to 1."""
    x = _tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def push(g):
        if x.requires_grad:
            _accum(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _make(y, (x,), push, "softmax")


def dropout(x, p: float, training: bool = True, seed=0) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p).

    Identity at inference or p=0.  ``seed`` may be an int or a
    ``numpy.random.Generator`` (training passes a per-batch generator).
    """
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must satisfy 0 <= p < 1, got {p}")
    x = _tensor(x)
    if not training or p == 0.0:
        return x
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)

    def push(g):
        if x.requires_grad:
            _accum(x, g * mask)

    return _make(x.data * mask, (x,), push, "dropout")


# ---------------------------------------------------------------------------
# structured ops


def conv1d(x, w, b) -> Tensor:
    """Valid stride-1 convolution of an L x D sequence with K filters of width S.

    ``w`` has shape (K, S, D); the output is (L-S+1) x K.
    """
    x, w, b = _tensor(x), _tensor(w), _tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 3 or b.data.ndim != 1:
        raise DimensionError(
            f"conv1d expects input (L, D), filters (K, S, D), bias (K); "
            f"got {x.data.shape}, {w.data.shape}, {b.data.shape}"
        )
    L, D = x.data.shape
    K, S, Dw = w.data.shape
    if Dw != D:
        raise DimensionError(
            f"conv1d: input depth {D} (input axis 1) does not match filter depth {Dw} (filter axis 2)"
        )
    if b.data.shape[0] != K:
        raise DimensionError(f"conv1d: bias length {b.data.shape[0]} does not match filter count {K}")
    if S < 1:
        raise DimensionError("conv1d: filter width must be at least 1")
    if L < S:
        raise SequenceTooShortError(f"conv1d: sequence length {L} is shorter than filter width {S}")

    out = kernels.conv1d_forward(
        np.ascontiguousarray(x.data), np.ascontiguousarray(w.data), np.ascontiguousarray(b.data)
    )

    def push(g):
        gx, gw, gb = kernels.conv1d_backward(
            np.ascontiguousarray(x.data), np.ascontiguousarray(w.data), np.ascontiguousarray(g)
        )
        if x.requires_grad:
            _accum(x, gx)
        if w.requires_grad:
            _accum(w, gw)
        if b.requires_grad:
            _accum(b, gb)

    return _make(out, (x, w, b), push, "conv1d")


def global_max_pool(x) -> Tensor:
    """Column-wise max of an L x K matrix; ties route gradient to the first max."""
    x = _tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"global_max_pool expects (L, K), got {x.data.shape}")
    if x.data.shape[0] < 1:
        raise DimensionError("global_max_pool: empty sequence")
    values, idx = kernels.maxpool_forward(np.ascontiguousarray(x.data))
    cols = np.arange(x.data.shape[1])

    def push(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[idx, cols] = g
            _accum(x, gx)

    return _make(values, (x,), push, "global_max_pool")


def dense(x, W, b) -> Tensor:
    """Affine map W x + b for 1-D x."""
    x, W, b = _tensor(x), _tensor(W), _tensor(b)
    if x.data.ndim != 1 or W.data.ndim != 2 or b.data.ndim != 1:
        raise DimensionError(
            f"dense expects x (n,), W (m, n), b (m,); got {x.data.shape}, {W.data.shape}, {b.data.shape}"
        )
    m, n = W.data.shape
    if x.data.shape[0] != n:
        raise DimensionError(f"dense: input length {x.data.shape[0]} does not match weight columns {n}")
    if b.data.shape[0] != m:
        raise DimensionError(f"dense: bias length {b.data.shape[0]} does not match weight rows {m}")

    def push(g):
        if x.requires_grad:
            _accum(x, W.data.T @ g)
        if W.requires_grad:
            _accum(W, np.outer(g, x.data))
        if b.requires_grad:
            _accum(b, g)

    return _make(W.data @ x.data + b.data, (x, W, b), push, "dense")


def gather_rows(matrix, ids, frozen_rows=None) -> Tensor:
    """Select rows of a (V, D) matrix by integer id.

    Gradient scatters back into the matrix; rows listed in ``frozen_rows``
    (e.g. a padding row) receive no gradient.
    """
    matrix = _tensor(matrix)
    ids = np.asarray(ids, dtype=np.int64)
    if matrix.data.ndim != 2 or ids.ndim != 1:
        raise DimensionError(
            f"gather_rows expects matrix (V, D) and 1-D ids; got {matrix.data.shape}, {ids.shape}"
        )
    V = matrix.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise DimensionError(f"gather_rows: id out of range for {V} rows")
    if frozen_rows:
        keep = ~np.isin(ids, np.fromiter(frozen_rows, dtype=np.int64))
    else:
        keep = slice(None)

    def push(g):
        if matrix.requires_grad:
            if matrix.grad is None:
                matrix.grad = np.zeros_like(matrix.data)
            np.add.at(matrix.grad, ids[keep], g[keep])

    return _make(matrix.data[ids].copy(), (matrix,), push, "gather_rows")


def window_stack(x, win: int) -> Tensor:
    """Stack sliding windows along the first axis: (L, ...) -> (L-win+1, win, ...)."""
    x = _tensor(x)
    if win < 1:
        raise ConfigError(f"window size must be positive, got {win}")
    L = x.data.shape[0]
    if L < win:
        raise SequenceTooShortError(f"window_stack: length {L} is shorter than window {win}")
    sw = np.lib.stride_tricks.sliding_window_view(x.data, win, axis=0)
    out = np.moveaxis(sw, -1, 1).copy()
    P = L - win + 1

    def push(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for k in range(win):  # windows overlap, so adds overlap too
                gx[k:k + P] += g[:, k]
            _accum(x, gx)

    return _make(out, (x,), push, "window_stack")


def einsum_pair(spec: str, a, b) -> Tensor:
    """Two-operand einsum with autodiff.

    Valid whenever every index of one operand also appears in the output or
    in the other operand (true for every contraction the models use); the
    gradient is then the einsum with that operand and the output swapped.
    """
    a, b = _tensor(a), _tensor(b)
    ins, out_sub = spec.split("->")
    sa, sb = ins.split(",")
    y = np.einsum(spec, a.data, b.data)

    def push(g):
        if a.requires_grad:
            _accum(a, np.einsum(f"{out_sub},{sb}->{sa}", g, b.data))
        if b.requires_grad:
            _accum(b, np.einsum(f"{sa},{out_sub}->{sb}", a.data, g))

    return _make(y, (a, b), push, "einsum")


# ---------------------------------------------------------------------------
# numeric gradient oracle


def finite_difference_gradient(f, x, step: float = 1e-5) -> Tensor:
    """Central-difference gradient of scalar ``f`` with respect to ``x``.

    ``f`` is called with ``x`` after each in-place nudge, so it must read
    ``x.data`` fresh on every call (any define-by-run forward does).
    """
    if step <= 0:
        raise ConfigError(f"finite difference step must be positive, got {step}")
    x = _tensor(x)
    flat = np.ascontiguousarray(x.data).reshape(-1)
    x.data = flat.reshape(x.data.shape)  # share memory with flat
    g = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x))
        flat[i] = orig - step
        fm = float(f(x))
        flat[i] = orig
        g[i] = (fp - fm) / (2.0 * step)
    return Tensor(g.reshape(x.data.shape))
