"""Mask-guided sparse window attention and its sparsity accounting.

Attention runs only inside 8x8 windows that intersect the hole mask;
everything else passes through untouched. As a mask shrinks, the number
of attended tokens falls monotonically.
"""

import numpy as np

from flowpaint.kernels import select_masked_windows, sparse_window_attention
from flowpaint.transformer import TransformerConfig, count_attended_tokens

rng = np.random.default_rng(2)
h, w, c = 64, 64, 8
x = rng.normal(size=(h, w, c))

mask = np.zeros((h, w), bool)
mask[20:36, 20:44] = True

grid = select_masked_windows(mask, 8)
out = sparse_window_attention(x, x, x, grid)

changed = np.any(out != x, axis=-1)
print(f"windows selected: {len(grid.selected)} of {grid.grid_shape[0] * grid.grid_shape[1]}")
print(f"positions updated by attention: {changed.sum()} "
      f"(= {len(grid.selected)} windows x 64 tokens)")

cfg = TransformerConfig(window_size=8)
print("\nshrinking mask -> attended token ratio:")
while True:
    ratio = count_attended_tokens(mask, cfg) / mask.size
    print(f"  mask {mask.sum():5d} px -> attended ratio {ratio:.3f}")
    if not mask.any():
        break
    mask = mask & (rng.random((h, w)) < 0.5)
