"""Streaming flow-guided video inpainting with sparse window attention.

Submodules:

- ``kernels``: bilinear sampling/warping, (deformable) convolution,
  window selection and sparse window attention.
- ``flow``: pyramidal Lucas-Kanade estimation, harmonic and recurrent
  flow completion, forward-backward consistency.
- ``propagation``: dual-domain (image + feature) propagation along
  completed flows.
- ``transformer``: mask-guided sparse window transformer refinement.
- ``pipeline``: scene I/O, chunk planning, memory-bounded execution and
  the ``inpaint`` CLI.
- ``metrics``: MAE/PSNR and the weighted accuracy/consistency error
  aggregation, plus the ``evaluate`` CLI.
"""

__version__ = "0.1.0"
