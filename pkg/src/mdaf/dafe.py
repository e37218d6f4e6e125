"""Dual-Domain Adaptive Feature Enhancement.

A skip-connection feature is sent through a Haar round trip (subbands
concatenated, reduced 4C->C, multi-scale kernel perception, expanded
C->4C, inverse transform), then through horizontal and vertical strip
modulation that rebalances low and high frequency content per channel,
and finally blended with the input by learnable per-channel weights.

At initialization (w_l=1, w_h=0, alpha=1, beta=0) the whole module is an
exact no-op, so enabling it never perturbs an untrained network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import ConvParams
from .tensor import ShapeError, Tensor, concat, mul, split
from .wavelet import FrequencySubbands, dwt_haar, idwt_haar

SUBBAND_ORDER = ("ll", "lh", "hl", "hh")  # fixed concat/split convention
MSKP_KERNELS = (3, 5, 7)


@dataclass
class DafeParams:
    """Learnable state of one DAFE block; disabled parts are None.

    Per-channel weights are stored (1, C, 1, 1) for direct broadcasting.
    """

    reduce: ConvParams | None
    expand: ConvParams | None
    mskp_stages: list[tuple[ConvParams, ConvParams]] | None
    wl_h: Tensor | None
    wh_h: Tensor | None
    wl_v: Tensor | None
    wh_v: Tensor | None
    alpha: Tensor | None
    beta: Tensor | None
    strip_k_h: int | None = None  # None means full extent
    strip_k_v: int | None = None
    mskp_parallel: bool = False
    use_wavelet: bool = True

    def named_params(self, prefix: str):
        if self.reduce is not None:
            yield from self.reduce.named_params(f"{prefix}.reduce")
        if self.expand is not None:
            yield from self.expand.named_params(f"{prefix}.expand")
        if self.mskp_stages is not None:
            for k, (d, p) in zip(MSKP_KERNELS, self.mskp_stages):
                yield from d.named_params(f"{prefix}.mskp_k{k}.depth")
                yield from p.named_params(f"{prefix}.mskp_k{k}.point")
        for name in ("wl_h", "wh_h", "wl_v", "wh_v", "alpha", "beta"):
            t = getattr(self, name)
            if t is not None:
                yield f"{prefix}.{name}", t


def _channel_vec(value: float, channels: int, dtype) -> Tensor:
    return Tensor(np.full((1, channels, 1, 1), value, dtype=dtype), requires_grad=True)


def make_dafe(rng: np.random.Generator, channels: int, *, strip_k_h: int | None = None,
              strip_k_v: int | None = None, use_wavelet: bool = True, use_mskp: bool = True,
              use_afm: bool = True, use_adaptive_residual: bool = True,
              mskp_parallel: bool = False, dtype=np.float64) -> DafeParams:
    """Build DAFE parameters; toggles mirror the ablation variants."""
    mskp = None
    if use_mskp:
        mskp = [(nn.make_conv(rng, channels, channels, k, groups=channels, dtype=dtype),
                 nn.make_conv(rng, channels, channels, 1, dtype=dtype))
                for k in MSKP_KERNELS]
    reduce = expand = None
    if use_wavelet:
        reduce = nn.make_conv(rng, 4 * channels, channels, 1, dtype=dtype)
        expand = nn.make_conv(rng, channels, 4 * channels, 1, dtype=dtype)
    wl_h = wh_h = wl_v = wh_v = None
    if use_afm:
        wl_h = _channel_vec(1.0, channels, dtype)
        wh_h = _channel_vec(0.0, channels, dtype)
        wl_v = _channel_vec(1.0, channels, dtype)
        wh_v = _channel_vec(0.0, channels, dtype)
    alpha = beta = None
    if use_adaptive_residual:
        alpha = _channel_vec(1.0, channels, dtype)
        beta = _channel_vec(0.0, channels, dtype)
    return DafeParams(reduce=reduce, expand=expand, mskp_stages=mskp,
                      wl_h=wl_h, wh_h=wh_h, wl_v=wl_v, wh_v=wh_v,
                      alpha=alpha, beta=beta, strip_k_h=strip_k_h, strip_k_v=strip_k_v,
                      mskp_parallel=mskp_parallel, use_wavelet=use_wavelet)


def mskp(x: Tensor, p: DafeParams) -> Tensor:
    """Multi-scale kernel perception: depthwise-separable stages at kernel
    sizes 3, 5, 7, each with a residual add so zero kernels give identity.

    Sequential by default; ``mskp_parallel`` sums the three branches instead.
    """
    if p.mskp_stages is None:
        return x
    if p.mskp_parallel:
        out = x
        for depth, point in p.mskp_stages:
            out = out + nn.depthwise_separable_conv(x, depth, point)
        return out
    out = x
    for depth, point in p.mskp_stages:
        out = out + nn.depthwise_separable_conv(out, depth, point)
    return out


def dafe_wavelet_path(f: Tensor, p: DafeParams, training: bool = False) -> Tensor:
    """Haar round trip around MSKP; shape preserving for even spatial dims."""
    c = f.shape[1]
    if not p.use_wavelet:
        return mskp(f, p)
    subbands = dwt_haar(f)
    stacked = concat(subbands.as_list())
    squeezed = nn.conv2d(stacked, p.reduce)
    perceived = mskp(squeezed, p)
    expanded = nn.conv2d(perceived, p.expand)
    ll, lh, hl, hh = split(expanded, [c, c, c, c])
    return idwt_haar(FrequencySubbands(ll, lh, hl, hh))


def afm_stage(x: Tensor, w_l: Tensor, w_h: Tensor, direction: str,
              k: int | None = None) -> Tensor:
    """One strip-modulation stage.

    The strip mean is the low band; the remainder is the high band. Output
    is w_l * low + (w_h + 1) * high, so w_l=1, w_h=0 is an exact identity.
    """
    if direction == "h":
        low = nn.strip_pool_h(x, k)
    elif direction == "v":
        low = nn.strip_pool_v(x, k)
    else:
        raise ShapeError(f"unknown strip direction {direction!r}")
    high = x - low
    return mul(w_l, low) + mul(w_h + 1.0, high)


def dafe_forward(f: Tensor, p: DafeParams, training: bool = False) -> Tensor:
    """Full DAFE pipeline: wavelet path, two strip stages, adaptive residual."""
    modulated = dafe_wavelet_path(f, p, training)
    if p.wl_h is not None:
        modulated = afm_stage(modulated, p.wl_h, p.wh_h, "h", p.strip_k_h)
        modulated = afm_stage(modulated, p.wl_v, p.wh_v, "v", p.strip_k_v)
    if p.alpha is not None:
        return mul(p.alpha, f) + mul(p.beta, modulated)
    return f + modulated
