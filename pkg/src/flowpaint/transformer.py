"""Sparse window transformer refinement.

A pre-norm transformer block whose window attention runs only on windows
that intersect the hole mask; everywhere else the attention sublayer is
an identity and only the feed-forward path acts.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import (
    select_masked_windows,
    sparse_window_attention,
    window_selection_map,
)

LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class TransformerConfig:
    window_size: int = 8
    heads: int = 1
    ffn_expansion: int = 2

    def __post_init__(self):
        if min(self.window_size, self.heads, self.ffn_expansion) < 1:
            raise ValueError("all config values must be >= 1")


@dataclass
class TransformerWeights:
    """Projection, feed-forward and layer-norm parameters for one block."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    ln1_scale: np.ndarray
    ln1_shift: np.ndarray
    ln2_scale: np.ndarray
    ln2_shift: np.ndarray

    @classmethod
    def random(cls, seed=0, channels=8, ffn_expansion=2):
        rng = np.random.default_rng(seed)
        c, e = channels, channels * ffn_expansion
        p = lambda *s: rng.normal(0.0, 0.3 / np.sqrt(s[0]), size=s)
        return cls(
            wq=p(c, c), wk=p(c, c), wv=p(c, c), wo=p(c, c),
            ffn_w1=p(c, e), ffn_b1=np.zeros(e),
            ffn_w2=p(e, c), ffn_b2=np.zeros(c),
            ln1_scale=np.ones(c), ln1_shift=np.zeros(c),
            ln2_scale=np.ones(c), ln2_shift=np.zeros(c),
        )

    @classmethod
    def zeros(cls, channels=8, ffn_expansion=2):
        c, e = channels, channels * ffn_expansion
        z = np.zeros
        return cls(
            wq=z((c, c)), wk=z((c, c)), wv=z((c, c)), wo=z((c, c)),
            ffn_w1=z((c, e)), ffn_b1=z(e), ffn_w2=z((e, c)), ffn_b2=z(c),
            ln1_scale=np.ones(c), ln1_shift=z(c),
            ln2_scale=np.ones(c), ln2_shift=z(c),
        )

    def to_tensors(self):
        return {f"refine.{k}": v for k, v in vars(self).items()}

    @classmethod
    def from_tensors(cls, tensors):
        names = [f.name for f in cls.__dataclass_fields__.values()]
        return cls(**{n: tensors[f"refine.{n}"] for n in names})


def layer_norm(x, scale, shift, eps=LAYER_NORM_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * scale + shift


def transformer_block(features, mask, weights, cfg):
    """Refine one frame's feature map where the hole mask remains.

    layer-norm -> sparse window attention (selected windows only, with
    residual) -> layer-norm -> feed-forward (all positions, residual).
    """
    x = np.asarray(features, dtype=np.float64)
    mask = np.asarray(mask)
    if x.ndim != 3 or mask.shape != x.shape[:2]:
        raise ValueError("features must be H x W x C with a matching mask")
    grid = select_masked_windows(mask, cfg.window_size)

    if grid.selected:
        h = layer_norm(x, weights.ln1_scale, weights.ln1_shift)
        attn = sparse_window_attention(
            h @ weights.wq, h @ weights.wk, h @ weights.wv, grid, heads=cfg.heads
        )
        sel = window_selection_map(grid)[:, :, None]
        x = np.where(sel, x + attn @ weights.wo, x)

    h2 = layer_norm(x, weights.ln2_scale, weights.ln2_shift)
    ffn = np.maximum(h2 @ weights.ffn_w1 + weights.ffn_b1, 0.0)
    ffn = ffn @ weights.ffn_w2 + weights.ffn_b2
    return x + ffn


def refine_sequence(features, masks, weights, cfg):
    """Apply the block to every frame of a sequence."""
    if len(features) != len(masks):
        raise ValueError("features and masks lengths differ")
    return [transformer_block(f, m, weights, cfg) for f, m in zip(features, masks)]


def count_attended_tokens(masks, cfg):
    """Number of query positions inside mask-selected windows (summed
    over frames when a list of masks is given)."""
    if isinstance(masks, np.ndarray) and masks.ndim == 2:
        masks = [masks]
    total = 0
    for mask in masks:
        grid = select_masked_windows(mask, cfg.window_size)
        for wi, wj in grid.selected:
            ys, xs = grid.window_slices(wi, wj)
            total += (ys.stop - ys.start) * (xs.stop - xs.start)
    return total
