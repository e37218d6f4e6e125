"""Dense 4-D tensor with reverse-mode automatic differentiation.

Every value in this library is a rank-4 array in (N, C, H, W) layout,
including scalars, which are shaped (1, 1, 1, 1). Ops record a closure
that scatters the output gradient back to their inputs; ``backward`` on
a scalar tensor replays those closures in reverse topological order.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


class Tensor:
    """Rank-4 array plus optional gradient slot and graph bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        arr = np.asarray(data)
        if arr.ndim != 4:
            raise ShapeError(f"tensors are rank-4 (N,C,H,W); got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numel(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        Only scalar (1,1,1,1) roots are accepted. Repeated calls without
        ``zero_grad`` accumulate.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _topo_order(self)
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic sugar; scalars are lifted to constant tensors
    def __add__(self, other):
        return add(self, _lift(other, self.dtype))

    def __radd__(self, other):
        return add(_lift(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _lift(other, self.dtype))

    def __rsub__(self, other):
        return sub(_lift(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self.dtype))

    def __rmul__(self, other):
        return mul(_lift(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _lift(other, self.dtype))

    def __neg__(self):
        return mul(self, _lift(-1.0, self.dtype))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def scalar(value: float, dtype=np.float64) -> Tensor:
    return Tensor(np.full((1, 1, 1, 1), value, dtype=dtype))


def zeros(shape, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones(shape, dtype=np.float64, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=requires_grad)


def _lift(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return scalar(float(value), dtype=dtype)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def make_op(out_data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    """Wrap an op result; records the graph edge only if a parent needs grads."""
    out = Tensor(out_data, op=op)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    axes = tuple(i for i in range(4) if shape[i] == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True)


def _broadcast_check(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} against {b.shape}") from None


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b)
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.shape))

    return make_op(out_data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b)
    out_data = a.data - b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.shape))

    return make_op(out_data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b)
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.shape))

    return make_op(out_data, (a, b), backward, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_check(a, b)
    out_data = a.data / b.data

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return make_op(out_data, (a, b), backward, "div")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign to avoid overflow in exp
    d = x.data
    out_data = np.empty_like(d)
    pos = d >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * out_data * (1.0 - out_data))

    return make_op(out_data, (x,), backward, "sigmoid")


def silu(x: Tensor) -> Tensor:
    s = sigmoid(x)  # reuse the stable sigmoid forward; build custom backward
    s_data = s.data
    out_data = x.data * s_data

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * (s_data + x.data * s_data * (1.0 - s_data)))

    return make_op(out_data, (x,), backward, "silu")


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0))

    return make_op(out_data, (x,), backward, "relu")


def total_sum(x: Tensor) -> Tensor:
    """Sum over all elements, producing a (1,1,1,1) scalar tensor."""
    out_data = x.data.sum(dtype=x.data.dtype).reshape(1, 1, 1, 1)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g.reshape(()), x.shape))

    return make_op(out_data, (x,), backward, "total_sum")


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    if axis != 1:
        raise ShapeError("concat supports the channel axis only")
    base = tensors[0].shape
    for t in tensors[1:]:
        s = t.shape
        if (s[0], s[2], s[3]) != (base[0], base[2], base[3]):
            raise ShapeError(f"concat needs matching N,H,W: {base} vs {s}")
    out_data = np.concatenate([t.data for t in tensors], axis=1)
    sizes = [t.shape[1] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                t.accumulate_grad(g[:, lo:hi])

    return make_op(out_data, tuple(tensors), backward, "concat")


def split(x: Tensor, sizes: list[int], axis: int = 1) -> list[Tensor]:
    if axis != 1:
        raise ShapeError("split supports the channel axis only")
    if sum(sizes) != x.shape[1]:
        raise ShapeError(f"split sizes {sizes} do not cover {x.shape[1]} channels")
    outs = []
    lo = 0
    for size in sizes:
        hi = lo + size
        piece = x.data[:, lo:hi].copy()

        def backward(g, lo=lo, hi=hi):
            if x.requires_grad:
                full = np.zeros_like(x.data)
                full[:, lo:hi] = g
                x.accumulate_grad(full)

        outs.append(make_op(piece, (x,), backward, "split"))
        lo = hi
    return outs


def narrow_batch(x: Tensor, index: int) -> Tensor:
    """Select one image from the batch axis, keeping rank 4."""
    if not 0 <= index < x.shape[0]:
        raise ShapeError(f"batch index {index} out of range for {x.shape}")
    out_data = x.data[index : index + 1].copy()

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[index : index + 1] = g
            x.accumulate_grad(full)

    return make_op(out_data, (x,), backward, "narrow_batch")


def subsample2(x: Tensor, row_offset: int, col_offset: int) -> Tensor:
    """Take every second pixel starting at (row_offset, col_offset)."""
    out_data = x.data[:, :, row_offset::2, col_offset::2].copy()

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, :, row_offset::2, col_offset::2] = g
            x.accumulate_grad(full)

    return make_op(out_data, (x,), backward, "subsample2")


def upsample_scatter2(x: Tensor, row_offset: int, col_offset: int) -> Tensor:
    """Place values on a doubled grid at offsets (row, col); zeros elsewhere.

    Adjoint of :func:`subsample2`.
    """
    n, c, h, w = x.shape
    out_data = np.zeros((n, c, 2 * h, 2 * w), dtype=x.data.dtype)
    out_data[:, :, row_offset::2, col_offset::2] = x.data

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g[:, :, row_offset::2, col_offset::2])

    return make_op(out_data, (x,), backward, "upsample_scatter2")


def _resize_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row-stochastic 1-D bilinear interpolation matrix (n_out x n_in)."""
    m = np.zeros((n_out, n_in), dtype=dtype)
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Bilinear interpolation to (out_h, out_w), half-pixel-centre convention."""
    n, c, h, w = x.shape
    if (out_h, out_w) == (h, w):
        return x
    wh = _resize_matrix(h, out_h, x.data.dtype)
    ww = _resize_matrix(w, out_w, x.data.dtype)
    tmp = np.einsum("ip,ncpq->nciq", wh, x.data, optimize=True)
    out_data = np.einsum("jq,nciq->ncij", ww, tmp, optimize=True)

    def backward(g):
        if x.requires_grad:
            t = np.einsum("jq,ncij->nciq", ww, g, optimize=True)
            x.accumulate_grad(np.einsum("ip,nciq->ncpq", wh, t, optimize=True))

    return make_op(out_data, (x,), backward, "bilinear_resize")


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ShapeError(f"upsample factor must be >= 1, got {factor}")
    return bilinear_resize(x, x.shape[2] * factor, x.shape[3] * factor)
