"""Neural-network primitives on the autodiff tensor: convolution, pooling,
strip pooling, channel statistics, batch normalization, and Adagrad.

Convolution runs as im2col plus a batched matmul; pooling shares one
windowed-mean kernel with count-exclude-pad border handling so constant
inputs stay exactly constant at the borders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, make_op


@dataclass
class ConvParams:
    """Weights and hyperparameters of one 2-D convolution.

    kernel is (C_out, C_in/groups, k_h, k_w); bias is (1, C_out, 1, 1) or None.
    """

    kernel: Tensor
    bias: Tensor | None
    stride: int = 1
    padding: int = 0
    groups: int = 1

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    def named_params(self, prefix: str):
        yield f"{prefix}.kernel", self.kernel
        if self.bias is not None:
            yield f"{prefix}.bias", self.bias


@dataclass
class BatchNormParams:
    """Per-channel affine parameters plus running statistics."""

    scale: Tensor
    shift: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1

    def named_params(self, prefix: str):
        yield f"{prefix}.scale", self.scale
        yield f"{prefix}.shift", self.shift

    def named_buffers(self, prefix: str):
        yield f"{prefix}.running_mean", self.running_mean
        yield f"{prefix}.running_var", self.running_var


def he_kernel(rng: np.random.Generator, c_out: int, c_in_per_group: int, kh: int, kw: int,
              dtype=np.float64) -> np.ndarray:
    fan_in = c_in_per_group * kh * kw
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal((c_out, c_in_per_group, kh, kw)) * std).astype(dtype)


def make_conv(rng: np.random.Generator, c_in: int, c_out: int, k: int, *, stride: int = 1,
              padding: int | None = None, groups: int = 1, bias: bool = True,
              dtype=np.float64, zero_init: bool = False) -> ConvParams:
    """Build ConvParams with He init (or zeros) and 'same' padding by default."""
    if c_in % groups or c_out % groups:
        raise ShapeError(f"groups={groups} must divide C_in={c_in} and C_out={c_out}")
    if padding is None:
        padding = k // 2
    if zero_init:
        kern = np.zeros((c_out, c_in // groups, k, k), dtype=dtype)
    else:
        kern = he_kernel(rng, c_out, c_in // groups, k, k, dtype)
    b = Tensor(np.zeros((1, c_out, 1, 1), dtype=dtype), requires_grad=True) if bias else None
    return ConvParams(Tensor(kern, requires_grad=True), b, stride=stride, padding=padding,
                      groups=groups)


def make_batch_norm(channels: int, dtype=np.float64, epsilon: float = 1e-5,
                    momentum: float = 0.1) -> BatchNormParams:
    return BatchNormParams(
        scale=Tensor(np.ones((1, channels, 1, 1), dtype=dtype), requires_grad=True),
        shift=Tensor(np.zeros((1, channels, 1, 1), dtype=dtype), requires_grad=True),
        running_mean=np.zeros(channels, dtype=dtype),
        running_var=np.ones(channels, dtype=dtype),
        epsilon=epsilon,
        momentum=momentum,
    )


def _conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Padded input -> (N, C, kh, kw, Ho, Wo) patch array (contiguous copy)."""
    view = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    view = view[:, :, ::stride, ::stride]  # (N, C, Ho, Wo, kh, kw)
    return np.ascontiguousarray(view.transpose(0, 1, 4, 5, 2, 3))


def _col2im(gp: np.ndarray, shape: tuple, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add (N, C, kh, kw, Ho, Wo) patch grads back to the input shape."""
    n, c, h, w = shape
    full = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=gp.dtype)
    ho, wo = gp.shape[4], gp.shape[5]
    for i in range(kh):
        for j in range(kw):
            full[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gp[:, :, i, j]
    if pad:
        full = full[:, :, pad : pad + h, pad : pad + w]
    return full


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    """Grouped 2-D convolution with zero padding."""
    n, c, h, w = x.shape
    c_out, c_in_g, kh, kw = p.kernel.shape
    g = p.groups
    if c != c_in_g * g:
        raise ShapeError(f"conv2d input channels {c} incompatible with kernel "
                         f"{p.kernel.shape} at groups={g}")
    if h + 2 * p.padding < kh or w + 2 * p.padding < kw:
        raise ShapeError(f"kernel ({kh},{kw}) larger than padded input ({h},{w}) "
                         f"with pad {p.padding}")
    ho = _conv_out_size(h, kh, p.stride, p.padding)
    wo = _conv_out_size(w, kw, p.stride, p.padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (p.padding,) * 2, (p.padding,) * 2)) if p.padding \
        else x.data
    patches = _im2col(xp, kh, kw, p.stride)  # (N, C, kh, kw, Ho, Wo)
    cols = patches.reshape(n, g, c_in_g * kh * kw, ho * wo)
    wmat = p.kernel.data.reshape(g, c_out // g, c_in_g * kh * kw)
    out = np.matmul(wmat[None], cols)  # (N, G, Co/G, L)
    out_data = out.reshape(n, c_out, ho, wo)
    if p.bias is not None:
        out_data += p.bias.data

    kernel, bias = p.kernel, p.bias

    def backward(grad):
        go = grad.reshape(n, g, c_out // g, ho * wo)
        if kernel.requires_grad:
            gw = np.matmul(go, cols.transpose(0, 1, 3, 2)).sum(axis=0)
            kernel.accumulate_grad(gw.reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate_grad(grad.sum(axis=(0, 2, 3)).reshape(bias.shape))
        if x.requires_grad:
            gcols = np.matmul(wmat.transpose(0, 2, 1)[None], go)  # (N, G, K, L)
            gp = gcols.reshape(n, c, kh, kw, ho, wo)
            x.accumulate_grad(_col2im(gp, x.shape, kh, kw, p.stride, p.padding))

    parents = (x, kernel) + ((bias,) if bias is not None else ())
    return make_op(out_data, parents, backward, "conv2d")


def depthwise_separable_conv(x: Tensor, depth: ConvParams, point: ConvParams) -> Tensor:
    """Depthwise convolution followed by a 1x1 pointwise convolution."""
    if depth.groups != x.shape[1]:
        raise ShapeError(f"depthwise stage needs groups == C ({x.shape[1]}), "
                         f"got {depth.groups}")
    if point.kernel.shape[2:] != (1, 1):
        raise ShapeError(f"pointwise stage needs a 1x1 kernel, got {point.kernel.shape}")
    return conv2d(conv2d(x, depth), point)


def _windowed_mean(x: Tensor, kh: int, kw: int, stride: int,
                   pads: tuple[int, int, int, int], op: str) -> Tensor:
    """Sliding-window mean dividing by the count of non-pad cells per window."""
    pt, pb, pl, pr = pads
    n, c, h, w = x.shape
    if kh > h + pt + pb or kw > w + pl + pr:
        raise ShapeError(f"pool window ({kh},{kw}) larger than padded input "
                         f"({h + pt + pb},{w + pl + pr})")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    sums = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride].sum((-2, -1))
    valid = np.pad(np.ones((h, w), dtype=x.data.dtype), ((pt, pb), (pl, pr)))
    counts = sliding_window_view(valid, (kh, kw))[::stride, ::stride].sum((-2, -1))
    out_data = sums / counts
    ho, wo = out_data.shape[2], out_data.shape[3]

    def backward(g):
        if not x.requires_grad:
            return
        gshare = g / counts
        full = np.zeros((n, c, h + pt + pb, w + pl + pr), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                full[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gshare
        x.accumulate_grad(full[:, :, pt : pt + h, pl : pl + w])

    return make_op(out_data, (x,), backward, op)


def avg_pool(x: Tensor, k: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Square average pooling; border windows divide by their valid-cell count."""
    if k < 1 or stride < 1:
        raise ShapeError(f"avg_pool needs k >= 1 and stride >= 1, got k={k} stride={stride}")
    return _windowed_mean(x, k, k, stride, (pad, pad, pad, pad), "avg_pool")


def _full_extent_mean(x: Tensor, axis: int, op: str) -> Tensor:
    out_data = np.broadcast_to(x.data.mean(axis=axis, keepdims=True), x.shape).copy()
    extent = x.shape[axis]

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g.sum(axis=axis, keepdims=True) / extent,
                                              x.shape).copy())

    return make_op(out_data, (x,), backward, op)


def strip_pool_h(x: Tensor, k: int | None = None) -> Tensor:
    """Horizontal strip pooling: mean over a (1, K) window, output shape preserved.

    k=None means the full row extent (per-row global mean, replicated).
    """
    w = x.shape[3]
    if k is None or k == w:
        return _full_extent_mean(x, 3, "strip_pool_h")
    if not 1 <= k <= w:
        raise ShapeError(f"strip length {k} out of range for width {w}")
    pl = (k - 1) // 2
    return _windowed_mean(x, 1, k, 1, (0, 0, pl, k - 1 - pl), "strip_pool_h")


def strip_pool_v(x: Tensor, k: int | None = None) -> Tensor:
    """Vertical strip pooling: mean over a (K, 1) window, output shape preserved."""
    h = x.shape[2]
    if k is None or k == h:
        return _full_extent_mean(x, 2, "strip_pool_v")
    if not 1 <= k <= h:
        raise ShapeError(f"strip length {k} out of range for height {h}")
    pt = (k - 1) // 2
    return _windowed_mean(x, k, 1, 1, (pt, k - 1 - pt, 0, 0), "strip_pool_v")


def global_avg_pool(x: Tensor) -> Tensor:
    out_data = x.data.mean(axis=(2, 3), keepdims=True)
    area = x.shape[2] * x.shape[3]

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g / area, x.shape).copy())

    return make_op(out_data, (x,), backward, "global_avg_pool")


def global_max_pool(x: Tensor) -> Tensor:
    """Per-channel spatial max; gradient routes to the first argmax in scan order."""
    n, c, h, w = x.shape
    flat = x.data.reshape(n, c, h * w)
    idx = flat.argmax(axis=2)
    out_data = np.take_along_axis(flat, idx[:, :, None], axis=2).reshape(n, c, 1, 1)

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(flat)
            np.put_along_axis(full, idx[:, :, None], g.reshape(n, c, 1), axis=2)
            x.accumulate_grad(full.reshape(x.shape))

    return make_op(out_data, (x,), backward, "global_max_pool")


def channel_stats(x: Tensor) -> Tensor:
    """Per-pixel channel reductions stacked as planes [mean, max, min, sum]."""
    d = x.data
    c = x.shape[1]
    imax = d.argmax(axis=1)
    imin = d.argmin(axis=1)
    out_data = np.stack(
        [d.mean(axis=1), np.take_along_axis(d, imax[:, None], 1)[:, 0],
         np.take_along_axis(d, imin[:, None], 1)[:, 0], d.sum(axis=1)], axis=1)

    def backward(g):
        if not x.requires_grad:
            return
        full = np.zeros_like(d)
        full += (g[:, 0:1] / c) + g[:, 3:4]
        ni, hi, wi = np.indices(imax.shape)
        np.add.at(full, (ni, imax, hi, wi), g[:, 1])
        np.add.at(full, (ni, imin, hi, wi), g[:, 2])
        x.accumulate_grad(full)

    return make_op(out_data, (x,), backward, "channel_stats")


def batch_norm(x: Tensor, p: BatchNormParams, training: bool) -> Tensor:
    """Per-channel normalization; batch statistics in training mode, running
    statistics (a fixed affine map) in eval mode."""
    if x.shape[1] != p.running_mean.shape[0]:
        raise ShapeError(f"batch_norm expects {p.running_mean.shape[0]} channels, "
                         f"got {x.shape[1]}")
    scale, shift = p.scale, p.shift
    if training:
        mean = x.data.mean(axis=(0, 2, 3), keepdims=True)
        var = x.data.var(axis=(0, 2, 3), keepdims=True)
        m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
        p.running_mean += p.momentum * (mean.ravel() - p.running_mean)
        p.running_var += p.momentum * (var.ravel() - p.running_var)
        inv_std = 1.0 / np.sqrt(var + p.epsilon)
        xhat = (x.data - mean) * inv_std
        out_data = scale.data * xhat + shift.data

        def backward(g):
            if scale.requires_grad:
                scale.accumulate_grad((g * xhat).sum(axis=(0, 2, 3), keepdims=True))
            if shift.requires_grad:
                shift.accumulate_grad(g.sum(axis=(0, 2, 3), keepdims=True))
            if x.requires_grad:
                gx = g * scale.data
                gsum = gx.sum(axis=(0, 2, 3), keepdims=True)
                gdot = (gx * xhat).sum(axis=(0, 2, 3), keepdims=True)
                x.accumulate_grad(inv_std * (gx - gsum / m - xhat * gdot / m))

        return make_op(out_data, (x, scale, shift), backward, "batch_norm")

    inv_std = 1.0 / np.sqrt(p.running_var + p.epsilon)
    a = (scale.data.ravel() * inv_std).reshape(1, -1, 1, 1)
    b = (shift.data.ravel() - p.running_mean * scale.data.ravel() * inv_std).reshape(1, -1, 1, 1)
    out_data = a * x.data + b

    def backward_eval(g):
        if scale.requires_grad:
            xhat = (x.data - p.running_mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
            scale.accumulate_grad((g * xhat).sum(axis=(0, 2, 3), keepdims=True))
        if shift.requires_grad:
            shift.accumulate_grad(g.sum(axis=(0, 2, 3), keepdims=True))
        if x.requires_grad:
            x.accumulate_grad(g * a)

    return make_op(out_data, (x, scale, shift), backward_eval, "batch_norm_eval")


@dataclass
class AdagradState:
    """Squared-gradient accumulators keyed by parameter name."""

    lr: float
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)
    epsilon: float = 1e-10

    def ensure(self, name: str, param: Tensor) -> np.ndarray:
        acc = self.accumulators.get(name)
        if acc is None:
            acc = np.zeros_like(param.data)
            self.accumulators[name] = acc
        return acc


def adagrad_step(params: dict[str, Tensor], state: AdagradState, lr: float | None = None) -> None:
    """One Adagrad update: acc += g^2; p -= lr * g / (sqrt(acc) + eps)."""
    step_lr = state.lr if lr is None else lr
    for name, p in params.items():
        if p.grad is None:
            continue
        acc = state.ensure(name, p)
        acc += p.grad * p.grad
        p.data -= step_lr * p.grad / (np.sqrt(acc) + state.epsilon)


def zero_grads(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None
