"""Brute-force reference implementations and numerical checkers.

Everything here is test surface: direct loops in double precision, written
against plain numpy arrays and sharing no code with the production kernels.
"""

from __future__ import annotations

import numpy as np


def naive_conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None,
                 stride: int = 1, padding: int = 0, groups: int = 1) -> np.ndarray:
    """Quadruple-loop grouped convolution."""
    n, c, h, w = x.shape
    c_out, c_in_g, kh, kw = kernel.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding,) * 2, (padding,) * 2)).astype(np.float64)
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((n, c_out, ho, wo))
    per_group_out = c_out // groups
    for b in range(n):
        for co in range(c_out):
            g = co // per_group_out
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ci in range(c_in_g):
                        for u in range(kh):
                            for v in range(kw):
                                acc += (xp[b, g * c_in_g + ci, i * stride + u, j * stride + v]
                                        * kernel[co, ci, u, v])
                    out[b, co, i, j] = acc
            if bias is not None:
                out[b, co] += float(np.ravel(bias)[co])
    return out


def naive_avg_pool(x: np.ndarray, k: int, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Window mean dividing by the count of in-bounds cells."""
    return naive_windowed_mean(x, k, k, stride, pad, pad, pad, pad)


def naive_windowed_mean(x: np.ndarray, kh: int, kw: int, stride: int,
                        pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    n, c, h, w = x.shape
    ho = (h + pt + pb - kh) // stride + 1
    wo = (w + pl + pr - kw) // stride + 1
    out = np.zeros((n, c, ho, wo))
    for b in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    cnt = 0
                    for u in range(kh):
                        for v in range(kw):
                            r = i * stride + u - pt
                            s = j * stride + v - pl
                            if 0 <= r < h and 0 <= s < w:
                                acc += float(x[b, ch, r, s])
                                cnt += 1
                    out[b, ch, i, j] = acc / cnt
    return out


def naive_strip_h(x: np.ndarray, k: int | None) -> np.ndarray:
    """Row-direction strip mean; k=None averages the full row."""
    n, c, h, w = x.shape
    if k is None or k == w:
        out = np.zeros_like(x, dtype=np.float64)
        for b in range(n):
            for ch in range(c):
                for i in range(h):
                    out[b, ch, i, :] = sum(float(v) for v in x[b, ch, i]) / w
        return out
    pl = (k - 1) // 2
    return naive_windowed_mean(x, 1, k, 1, 0, 0, pl, k - 1 - pl)


def naive_strip_v(x: np.ndarray, k: int | None) -> np.ndarray:
    n, c, h, w = x.shape
    if k is None or k == h:
        out = np.zeros_like(x, dtype=np.float64)
        for b in range(n):
            for ch in range(c):
                for j in range(w):
                    out[b, ch, :, j] = sum(float(v) for v in x[b, ch, :, j]) / h
        return out
    pt = (k - 1) // 2
    return naive_windowed_mean(x, k, 1, 1, pt, k - 1 - pt, 0, 0)


def naive_global_avg(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, 1, 1))
    for b in range(n):
        for ch in range(c):
            out[b, ch, 0, 0] = sum(float(v) for v in x[b, ch].ravel()) / (h * w)
    return out


def naive_global_max(x: np.ndarray) -> np.ndarray:
    n, c = x.shape[:2]
    out = np.zeros((n, c, 1, 1))
    for b in range(n):
        for ch in range(c):
            best = -np.inf
            for v in x[b, ch].ravel():
                if float(v) > best:
                    best = float(v)
            out[b, ch, 0, 0] = best
    return out


def naive_channel_stats(x: np.ndarray) -> np.ndarray:
    """Per-pixel [mean, max, min, sum] across channels."""
    n, c, h, w = x.shape
    out = np.zeros((n, 4, h, w))
    for b in range(n):
        for i in range(h):
            for j in range(w):
                vals = [float(x[b, ch, i, j]) for ch in range(c)]
                out[b, 0, i, j] = sum(vals) / c
                out[b, 1, i, j] = max(vals)
                out[b, 2, i, j] = min(vals)
                out[b, 3, i, j] = sum(vals)
    return out


def finite_diff_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar-valued function of an array."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite value when perturbing element {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_relative_error(approx: np.ndarray, exact: np.ndarray, floor: float = 1e-8) -> float:
    """Elementwise |approx - exact| / max(|exact|, floor), reduced with max."""
    denom = np.maximum(np.abs(exact), floor)
    return float(np.max(np.abs(approx - exact) / denom))


def flood_fill_components(mask: np.ndarray) -> list[dict]:
    """8-connected components via explicit stack flood fill.

    Returns a list of dicts with keys pixels, centroid, area, ordered by the
    scan position of each component's first pixel.
    """
    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    seen = np.zeros_like(m)
    comps = []
    for i in range(h):
        for j in range(w):
            if not m[i, j] or seen[i, j]:
                continue
            stack = [(i, j)]
            seen[i, j] = True
            pixels = []
            while stack:
                r, s = stack.pop()
                pixels.append((r, s))
                for dr in (-1, 0, 1):
                    for ds in (-1, 0, 1):
                        rr, ss = r + dr, s + ds
                        if 0 <= rr < h and 0 <= ss < w and m[rr, ss] and not seen[rr, ss]:
                            seen[rr, ss] = True
                            stack.append((rr, ss))
            rows = [p[0] for p in pixels]
            cols = [p[1] for p in pixels]
            comps.append({
                "pixels": pixels,
                "centroid": (sum(rows) / len(rows), sum(cols) / len(cols)),
                "area": len(pixels),
            })
    return comps
