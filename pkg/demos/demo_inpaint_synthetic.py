"""End-to-end inpainting on a synthetic translating scene.

A random texture slides one pixel to the right per frame, and one frame
has a square hole punched into it. Because every hole pixel is visible
in neighboring frames, flow-guided propagation restores it bit-exact
when the motion is known. The demo runs twice: once with ground-truth
motion injected through the flow hook, and once with estimated flow,
where the corrupted hole pollutes the estimate and the engine falls
back to a smooth harmonic fill wherever the consistency check rejects
the motion.
"""

import numpy as np

from flowpaint.pipeline import SceneConfig, inpaint_sequence, postprocess, preprocess

rng = np.random.default_rng(0)
n, h, w = 10, 64, 64

# frame t shows columns [n - t, n - t + w) of a wide texture
texture = rng.random((h, w + n))
clean = [np.repeat(texture[:, n - t : n - t + w, None], 3, axis=2) for t in range(n)]

frames = [f.copy() for f in clean]
masks = [np.zeros((h, w), bool) for _ in range(n)]
masks[5][24:40, 24:40] = True
frames[5][masks[5]] = 0.0  # corrupt the hole so recovery is visible

def exact_flow(frame_i, frame_j, i, j):
    """Ground-truth motion: frame j's content sits (j - i) px to the left."""
    flow = np.zeros(frame_i.shape[:2] + (2,))
    flow[:, :, 0] = j - i
    return flow


cfg = SceneConfig(scale_factor=1.0)
hole = masks[5]
print(f"frames: {n}  resolution: {w}x{h}  hole: {hole.sum()} px in frame 5\n")

for label, hook in (("ground-truth flow", exact_flow), ("estimated flow", None)):
    sequence, record = preprocess(list(zip(frames, masks)), cfg)
    report = {}
    inpainted = inpaint_sequence(sequence, cfg, flow_hook=hook, report=report)
    final = postprocess(inpainted, frames, masks, record)
    err = np.abs(final[5] - clean[5])
    print(f"[{label}]")
    print(f"  max error inside the hole:  {err[hole].max():.3e}")
    print(f"  max error outside the hole: {err[~hole].max():.3e} (contractually zero)")
    print(f"  peak resident frames: {report['peak_resident_frames']}")
    print("  stage timings (ms):",
          {k: round(v, 1) for k, v in report["timings_ms"].items()})
