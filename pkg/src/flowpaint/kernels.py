"""Pure numerical primitives: bilinear sampling, warping, convolution,
deformable convolution, window partitioning and sparse window attention.

All functions are deterministic and side-effect free. Feature maps are
H x W x C float arrays, flow fields are H x W x 2 with channel 0 the
horizontal (x) displacement and channel 1 the vertical (y) displacement,
in the backward-warp convention: out(p) = src(p + flow(p)).
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WindowGrid",
    "bilinear_sample",
    "bilinear_sample_map",
    "warp",
    "conv2d",
    "deformable_conv",
    "select_masked_windows",
    "window_selection_map",
    "sparse_window_attention",
]


def bilinear_sample_map(src, ys, xs):
    """Bilinearly sample ``src`` (H x W x C) at real coordinates.

    ``ys``/``xs`` are arrays of identical shape; coordinates outside the
    image are clamped to the border (replicate padding). Returns an array
    of shape ``ys.shape + (C,)``.
    """
    src = np.asarray(src, dtype=np.float64)
    if src.ndim == 2:
        src = src[:, :, None]
    h, w = src.shape[:2]
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)

    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]

    v00 = src[y0, x0]
    v01 = src[y0, x1]
    v10 = src[y1, x0]
    v11 = src[y1, x1]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy


def bilinear_sample(src, y, x):
    """Sample a single location; returns a length-C vector."""
    return bilinear_sample_map(src, np.float64(y), np.float64(x))


def warp(src, flow):
    """Backward-warp ``src`` by ``flow``: out(p) = src(p + flow(p)).

    Zero flow is a bit-exact identity.
    """
    src = np.asarray(src, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    squeeze = src.ndim == 2
    if squeeze:
        src = src[:, :, None]
    if flow.shape[:2] != src.shape[:2] or flow.shape[2] != 2:
        raise ValueError(
            f"flow shape {flow.shape} does not match source {src.shape[:2]}"
        )
    h, w = src.shape[:2]
    gy, gx = np.mgrid[0:h, 0:w]
    out = bilinear_sample_map(src, gy + flow[:, :, 1], gx + flow[:, :, 0])
    return out[:, :, 0] if squeeze else out


def conv2d(src, weights, bias=None, stride=1):
    """Cross-correlation with replicate border padding.

    ``weights`` has shape (C_out, C_in, kh, kw) with odd kernel dims;
    output spatial dims equal the input's divided by ``stride``.
    """
    src = np.asarray(src, dtype=np.float64)
    if src.ndim == 2:
        src = src[:, :, None]
    weights = np.asarray(weights, dtype=np.float64)
    c_out, c_in, kh, kw = weights.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("kernel dims must be odd")
    if src.shape[2] != c_in:
        raise ValueError(
            f"input has {src.shape[2]} channels, weights expect {c_in}"
        )
    padded = np.pad(src, ((kh // 2, kh // 2), (kw // 2, kw // 2), (0, 0)), mode="edge")
    win = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(0, 1))
    # win: (H, W, C_in, kh, kw)
    out = np.einsum("hwcij,ocij->hwo", win[::stride, ::stride], weights)
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


def _tap_offsets(kh, kw):
    """Nominal (dy, dx) per kernel tap, row-major, centered."""
    dy, dx = np.mgrid[0:kh, 0:kw]
    return np.stack([dy.ravel() - kh // 2, dx.ravel() - kw // 2], axis=1).astype(np.float64)


def deformable_conv(src, offsets, modulation, weights, bias=None):
    """Modulated deformable convolution with clamped bilinear sampling.

    offsets:    (H, W, K, 2) per-position per-tap (dy, dx) displacements
                added to the nominal kernel grid.
    modulation: (H, W, K) per-tap scalars in [0, 1].
    weights:    (C_out, C_in, kh, kw) with K == kh * kw.
    """
    src = np.asarray(src, dtype=np.float64)
    if src.ndim == 2:
        src = src[:, :, None]
    offsets = np.asarray(offsets, dtype=np.float64)
    modulation = np.asarray(modulation, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    c_out, c_in, kh, kw = weights.shape
    k = kh * kw
    if offsets.shape[-2:] != (k, 2) or modulation.shape[-1] != k:
        raise ValueError(
            f"offsets/modulation tap count does not match {kh}x{kw} kernel"
        )
    if src.shape[2] != c_in:
        raise ValueError("channel mismatch between source and weights")

    h, w = src.shape[:2]
    gy, gx = np.mgrid[0:h, 0:w]
    taps = _tap_offsets(kh, kw)
    out = np.zeros((h, w, c_out), dtype=np.float64)
    for ki in range(k):
        ys = gy + taps[ki, 0] + offsets[:, :, ki, 0]
        xs = gx + taps[ki, 1] + offsets[:, :, ki, 1]
        sampled = bilinear_sample_map(src, ys, xs) * modulation[:, :, ki, None]
        out += np.einsum("hwc,oc->hwo", sampled, weights[:, :, ki // kw, ki % kw])
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


@dataclass(frozen=True)
class WindowGrid:
    """Partition of an H x W plane into ws x ws windows plus a selection."""

    height: int
    width: int
    window_size: int
    selected: frozenset = field(default_factory=frozenset)

    @property
    def grid_shape(self):
        ws = self.window_size
        return (-(-self.height // ws), -(-self.width // ws))

    def window_slices(self, wi, wj):
        ws = self.window_size
        return (
            slice(wi * ws, min((wi + 1) * ws, self.height)),
            slice(wj * ws, min((wj + 1) * ws, self.width)),
        )

    def iter_selected(self):
        return sorted(self.selected)


def select_masked_windows(mask, window_size):
    """Select every window containing at least one nonzero mask pixel.

    Partial windows at the bottom/right edges participate like any other.
    """
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    mask = np.asarray(mask)
    h, w = mask.shape
    gh, gw = -(-h // window_size), -(-w // window_size)
    selected = set()
    for wi in range(gh):
        for wj in range(gw):
            block = mask[
                wi * window_size : (wi + 1) * window_size,
                wj * window_size : (wj + 1) * window_size,
            ]
            if np.any(block):
                selected.add((wi, wj))
    return WindowGrid(h, w, window_size, frozenset(selected))


def window_selection_map(grid):
    """Boolean H x W map, True inside selected windows."""
    sel = np.zeros((grid.height, grid.width), dtype=bool)
    for wi, wj in grid.selected:
        ys, xs = grid.window_slices(wi, wj)
        sel[ys, xs] = True
    return sel


def _softmax(scores):
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


def sparse_window_attention(q, k, v, grid, heads=1, return_weights=False):
    """Window-local attention restricted to the grid's selected windows.

    Inside a selected window: softmax(q k^T / sqrt(d)) v over the window's
    positions. Unselected windows pass ``v`` through unchanged.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (q.shape == k.shape == v.shape):
        raise ValueError("q, k, v must share a shape")
    c = q.shape[2]
    if c % heads != 0:
        raise ValueError("head count must divide channels")
    d = c // heads

    out = v.copy()
    attn_weights = {}
    for wi, wj in grid.iter_selected():
        ys, xs = grid.window_slices(wi, wj)
        qb = q[ys, xs].reshape(-1, heads, d)
        kb = k[ys, xs].reshape(-1, heads, d)
        vb = v[ys, xs].reshape(-1, heads, d)
        scores = np.einsum("nhd,mhd->hnm", qb, kb) / np.sqrt(d)
        w = _softmax(scores)
        ob = np.einsum("hnm,mhd->nhd", w, vb)
        shape = out[ys, xs].shape
        out[ys, xs] = ob.reshape(shape)
        if return_weights:
            attn_weights[(wi, wj)] = w
    if return_weights:
        return out, attn_weights
    return out
