"""Multi-Scale Differential Edge module.

An input feature map is projected into an edge space, run through a
pyramid of smoothed scales whose local-average differentials sharpen
edge response, fused with a 1x1 convolution, refined by channel and
spatial attention, and returned through a multiplicative residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .nn import BatchNormParams, ConvParams
from .tensor import Tensor, concat, mul, sigmoid, silu


class ConfigError(ValueError):
    """Raised for invalid module configuration."""


@dataclass
class CbsParams:
    """1x1 convolution + batch norm + sigmoid gate."""

    conv: ConvParams
    bn: BatchNormParams

    def named_params(self, prefix: str):
        yield from self.conv.named_params(f"{prefix}.conv")
        yield from self.bn.named_params(f"{prefix}.bn")

    def named_buffers(self, prefix: str):
        yield from self.bn.named_buffers(f"{prefix}.bn")


@dataclass
class MsdeParams:
    """All learnable state of one MSDE block.

    ``width`` counts the pyramid members entering the fusion concat: the
    projected input plus width-1 differential scales.
    """

    cbs_in: CbsParams
    cbs_scale: list[CbsParams]
    cbs_diff: list[CbsParams]
    fuse: ConvParams
    ds_depth: ConvParams
    ds_point: ConvParams
    phi_reduce: ConvParams
    phi_expand: ConvParams
    sa_conv7: ConvParams
    sa_conv1: ConvParams
    width: int

    def named_params(self, prefix: str):
        yield from self.cbs_in.named_params(f"{prefix}.cbs_in")
        for t, p in enumerate(self.cbs_scale):
            yield from p.named_params(f"{prefix}.cbs_scale{t + 1}")
        for t, p in enumerate(self.cbs_diff):
            yield from p.named_params(f"{prefix}.cbs_diff{t + 1}")
        yield from self.fuse.named_params(f"{prefix}.fuse")
        yield from self.ds_depth.named_params(f"{prefix}.ds_depth")
        yield from self.ds_point.named_params(f"{prefix}.ds_point")
        yield from self.phi_reduce.named_params(f"{prefix}.phi_reduce")
        yield from self.phi_expand.named_params(f"{prefix}.phi_expand")
        yield from self.sa_conv7.named_params(f"{prefix}.sa_conv7")
        yield from self.sa_conv1.named_params(f"{prefix}.sa_conv1")

    def named_buffers(self, prefix: str):
        yield from self.cbs_in.named_buffers(f"{prefix}.cbs_in")
        for t, p in enumerate(self.cbs_scale):
            yield from p.named_buffers(f"{prefix}.cbs_scale{t + 1}")
        for t, p in enumerate(self.cbs_diff):
            yield from p.named_buffers(f"{prefix}.cbs_diff{t + 1}")


def make_cbs(rng: np.random.Generator, channels: int, dtype=np.float64) -> CbsParams:
    # bias would be cancelled by the batch norm, so leave it out
    return CbsParams(conv=nn.make_conv(rng, channels, channels, 1, bias=False, dtype=dtype),
                     bn=nn.make_batch_norm(channels, dtype=dtype))


def make_msde(rng: np.random.Generator, channels: int, width: int = 4, *,
              sa_mid: int = 8, dtype=np.float64) -> MsdeParams:
    """Build MSDE parameters over an edge space with ``channels`` channels."""
    if width < 2:
        raise ConfigError(f"MSDE width must be >= 2, got {width}")
    phi_mid = max(4, channels // 4)
    return MsdeParams(
        cbs_in=make_cbs(rng, channels, dtype),
        cbs_scale=[make_cbs(rng, channels, dtype) for _ in range(width - 1)],
        cbs_diff=[make_cbs(rng, channels, dtype) for _ in range(width - 1)],
        fuse=nn.make_conv(rng, width * channels, channels, 1, dtype=dtype),
        ds_depth=nn.make_conv(rng, channels, channels, 3, groups=channels, dtype=dtype),
        ds_point=nn.make_conv(rng, channels, channels, 1, dtype=dtype),
        phi_reduce=nn.make_conv(rng, channels, phi_mid, 1, dtype=dtype),
        phi_expand=nn.make_conv(rng, phi_mid, channels, 1, dtype=dtype),
        sa_conv7=nn.make_conv(rng, 4, sa_mid, 7, dtype=dtype),
        sa_conv1=nn.make_conv(rng, sa_mid, 1, 1, dtype=dtype),
        width=width,
    )


def cbs(x: Tensor, p: CbsParams, training: bool) -> Tensor:
    """sigmoid(batch_norm(conv1x1(x))); outputs lie in (0, 1)."""
    return sigmoid(nn.batch_norm(nn.conv2d(x, p.conv), p.bn, training))


def edge_differential(e: Tensor, p_diff: CbsParams, training: bool) -> Tensor:
    """Add back the gated difference between a feature and its 3x3 local mean.

    Flat regions have a zero differential, so the added term is spatially
    constant there (the gate's response to zero).
    """
    return e + cbs(e - nn.avg_pool(e, 3, 1, 1), p_diff, training)


def msde_pyramid(x: Tensor, p: MsdeParams, training: bool) -> Tensor:
    """Edge pyramid: projected input plus width-1 differential scales,
    concatenated and fused by a 1x1 convolution. Spatial dims are preserved."""
    if p.width < 2:
        raise ConfigError(f"MSDE width must be >= 2, got {p.width}")
    e0 = cbs(x, p.cbs_in, training)
    members = [e0]
    e_prev = e0
    for p_scale, p_diff in zip(p.cbs_scale, p.cbs_diff):
        e_t = nn.avg_pool(cbs(e_prev, p_scale, training), 3, 1, 1)
        members.append(edge_differential(e_t, p_diff, training))
        e_prev = e_t
    return nn.conv2d(concat(members), p.fuse)


def channel_attention(e_m: Tensor, p: MsdeParams) -> Tensor:
    """Gate each channel with a sigmoid of pooled descriptors.

    The squeeze/excite stack is shared between the average-pool and
    max-pool paths.
    """

    def phi(v: Tensor) -> Tensor:
        return nn.conv2d(silu(nn.conv2d(v, p.phi_reduce)), p.phi_expand)

    gate = sigmoid(phi(nn.global_avg_pool(e_m)) + phi(nn.global_max_pool(e_m)))
    return mul(e_m, gate)


def spatial_attention(e_ca: Tensor, p: MsdeParams) -> Tensor:
    """Gate each pixel with a single-channel map built from channel statistics."""
    stats = nn.channel_stats(e_ca)
    gate = sigmoid(nn.conv2d(silu(nn.conv2d(stats, p.sa_conv7)), p.sa_conv1))
    return mul(e_ca, gate)


def msde_forward(x: Tensor, p: MsdeParams, training: bool) -> Tensor:
    """Full MSDE pipeline ending in the multiplicative residual
    (refined + fused) * fused."""
    e_c = msde_pyramid(x, p, training)
    e_m = nn.depthwise_separable_conv(e_c, p.ds_depth, p.ds_point)
    e_sa = spatial_attention(channel_attention(e_m, p), p)
    return mul(e_sa + e_c, e_c)
