"""Single-level 2-D Haar analysis/synthesis, orthonormal scaling.

Each 2x2 block [a b; c d] maps to four half-resolution coefficients:

    ll = (a + b + c + d) / 2      lh = (a + b - c - d) / 2
    hl = (a - b + c - d) / 2      hh = (a - b - c + d) / 2

The /2 scaling makes the transform orthonormal, so energy is conserved
and the inverse uses the same coefficients. Both directions are built
from differentiable engine primitives.
"""

from __future__ import annotations

from dataclasses import dataclass

from .tensor import ShapeError, Tensor, subsample2, upsample_scatter2


@dataclass
class FrequencySubbands:
    """The four Haar subbands of a feature map, each (N, C, H/2, W/2)."""

    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def as_list(self) -> list[Tensor]:
        return [self.ll, self.lh, self.hl, self.hh]

    def check_shapes(self) -> None:
        shapes = {t.shape for t in self.as_list()}
        if len(shapes) != 1:
            raise ShapeError(f"subband shapes differ: {[t.shape for t in self.as_list()]}")


def dwt_haar(x: Tensor) -> FrequencySubbands:
    """Forward Haar transform; input height and width must be even."""
    _, _, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"Haar transform needs even spatial dims, got ({h},{w})")
    a = subsample2(x, 0, 0)
    b = subsample2(x, 0, 1)
    c = subsample2(x, 1, 0)
    d = subsample2(x, 1, 1)
    ll = (a + b + c + d) * 0.5
    lh = (a + b - c - d) * 0.5
    hl = (a - b + c - d) * 0.5
    hh = (a - b - c + d) * 0.5
    return FrequencySubbands(ll, lh, hl, hh)


def idwt_haar(s: FrequencySubbands) -> Tensor:
    """Exact inverse of :func:`dwt_haar`."""
    s.check_shapes()
    ll, lh, hl, hh = s.ll, s.lh, s.hl, s.hh
    a = (ll + lh + hl + hh) * 0.5
    b = (ll + lh - hl - hh) * 0.5
    c = (ll - lh + hl - hh) * 0.5
    d = (ll - lh - hl + hh) * 0.5
    return (upsample_scatter2(a, 0, 0) + upsample_scatter2(b, 0, 1)
            + upsample_scatter2(c, 1, 0) + upsample_scatter2(d, 1, 1))
