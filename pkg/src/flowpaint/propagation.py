"""Dual-domain propagation along completed flows.

Image-domain propagation composites warped neighbor pixels into the
current frame's hole wherever the flow round trip is consistent and the
warp source location is already known. Feature-domain propagation aligns
neighbor feature maps with a flow-guided deformable convolution whose
per-tap residual offsets and modulation are predicted from the features
and the mask condition.
"""

from dataclasses import dataclass, field

import cv2
import numpy as np

from .flow import FlowPair, _conv_stack, _sigmoid, flow_consistency
from .kernels import deformable_conv, warp


@dataclass
class PropagationState:
    """Frames, remaining hole masks and (optionally) feature maps."""

    frames: list
    masks: list
    features: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.frames) != len(self.masks):
            raise ValueError("frames and masks lengths differ")
        for frame, mask in zip(self.frames, self.masks):
            if frame.shape[:2] != np.asarray(mask).shape:
                raise ValueError("frame/mask shapes differ")

    def copy(self):
        return PropagationState(
            [f.copy() for f in self.frames],
            [np.asarray(m).astype(bool).copy() for m in self.masks],
            [f.copy() for f in self.features],
        )


def compute_reliable_area(pair, known_src, eps=0.5):
    """Pixels whose warped neighbor content can be trusted.

    Reliable iff the forward-backward flow round trip closes within
    ``eps`` AND the nearest-pixel warp endpoint lies inside the frame in
    a known (unmasked or already filled) region of the source.
    """
    fwd = np.asarray(pair.forward, dtype=np.float64)
    known_src = np.asarray(known_src).astype(bool)
    h, w = known_src.shape
    consistent = flow_consistency(pair, eps)
    gy, gx = np.mgrid[0:h, 0:w]
    ey = np.rint(gy + fwd[:, :, 1]).astype(np.intp)
    ex = np.rint(gx + fwd[:, :, 0]).astype(np.intp)
    inside = (ey >= 0) & (ey < h) & (ex >= 0) & (ex < w)
    known_at_end = np.zeros((h, w), dtype=bool)
    known_at_end[inside] = known_src[ey[inside], ex[inside]]
    return consistent & inside & known_at_end


def _sweep(frames, masks, flows, eps, reverse):
    n = len(frames)
    order = range(n - 2, -1, -1) if reverse else range(1, n)
    for t in order:
        if not masks[t].any():
            continue
        src = t + 1 if reverse else t - 1
        pair = flows[t] if reverse else flows[t - 1].swapped()
        reliable = compute_reliable_area(pair, ~masks[src], eps)
        fill = masks[t] & reliable
        if not fill.any():
            continue
        warped = warp(frames[src], pair.forward)
        frames[t][fill] = warped[fill]
        masks[t] = masks[t] & ~fill


def propagate_image(state, completed_flows, eps=0.5):
    """One backward then one forward image-propagation sweep.

    Only pixels inside the current hole masks are ever modified; filled
    pixels are removed from the masks, so holes shrink monotonically.
    """
    if len(completed_flows) != max(len(state.frames) - 1, 0):
        raise ValueError("need one flow pair per adjacent frame pair")
    out = state.copy()
    if len(out.frames) < 2:
        return out
    _sweep(out.frames, out.masks, completed_flows, eps, reverse=True)
    _sweep(out.frames, out.masks, completed_flows, eps, reverse=False)
    return out


# ---------------------------------------------------------------------------
# feature-domain propagation


@dataclass
class AlignmentWeights:
    """Flow-guided deformable alignment parameters.

    ``offset``: conv stack over concat(current, neighbor, mask) emitting
    2K residual offsets plus K modulation logits; ``dcn``: the deformable
    kernel (C, C, kh, kw); ``fuse``: conv stack over concat(aligned,
    current) back to C channels. Shared between sweep directions.
    """

    offset: list
    dcn: tuple
    fuse: list

    @property
    def taps(self):
        return self.dcn[0].shape[2] * self.dcn[0].shape[3]

    @classmethod
    def random(cls, seed=0, channels=8, kernel=3, hidden=16):
        rng = np.random.default_rng(seed)

        def conv(c_out, c_in, k=3):
            scale = 0.3 / np.sqrt(c_in * k * k)
            return (
                rng.normal(0.0, scale, size=(c_out, c_in, k, k)),
                rng.normal(0.0, 0.01, size=c_out),
            )

        taps = kernel * kernel
        return cls(
            offset=[conv(hidden, 2 * channels + 1), conv(3 * taps, hidden)],
            dcn=conv(channels, channels, kernel),
            fuse=[conv(hidden, 2 * channels), conv(channels, hidden)],
        )

    def to_tensors(self):
        out = {}
        for group in ("offset", "fuse"):
            for i, (w, b) in enumerate(getattr(self, group)):
                out[f"align.{group}.{i}.weight"] = w
                out[f"align.{group}.{i}.bias"] = b
        out["align.dcn.weight"], out["align.dcn.bias"] = self.dcn
        return out

    @classmethod
    def from_tensors(cls, tensors):
        def stack(group):
            layers = []
            i = 0
            while f"align.{group}.{i}.weight" in tensors:
                layers.append(
                    (tensors[f"align.{group}.{i}.weight"], tensors[f"align.{group}.{i}.bias"])
                )
                i += 1
            return layers

        return cls(
            offset=stack("offset"),
            dcn=(tensors["align.dcn.weight"], tensors["align.dcn.bias"]),
            fuse=stack("fuse"),
        )


def downsample_flow(flow, feat_h, feat_w):
    """Resize a flow field to feature resolution, scaling magnitudes."""
    h, w = flow.shape[:2]
    scaled = cv2.resize(flow, (feat_w, feat_h), interpolation=cv2.INTER_LINEAR)
    scaled = np.asarray(scaled, dtype=np.float64)
    scaled[:, :, 0] *= feat_w / w
    scaled[:, :, 1] *= feat_h / h
    return scaled


def downsample_mask(mask, feat_h, feat_w):
    """Any-pooling mask downsample: a feature cell is masked when any
    covered pixel is."""
    resized = cv2.resize(
        np.asarray(mask).astype(np.uint8),
        (feat_w, feat_h),
        interpolation=cv2.INTER_AREA,
    )
    return resized > 0


def _align(current, neighbor, mask_cond, flow_down, weights):
    taps = weights.taps
    h, w = current.shape[:2]
    x = np.concatenate([current, neighbor, mask_cond[:, :, None].astype(np.float64)], axis=-1)
    raw = _conv_stack(x, weights.offset)
    residual = raw[:, :, : 2 * taps].reshape(h, w, taps, 2)
    modulation = _sigmoid(raw[:, :, 2 * taps :])
    base = np.stack([flow_down[:, :, 1], flow_down[:, :, 0]], axis=-1)  # (dy, dx)
    offsets = base[:, :, None, :] + residual
    dcn_w, dcn_b = weights.dcn
    aligned = deformable_conv(neighbor, offsets, modulation, dcn_w, dcn_b)
    return _conv_stack(np.concatenate([aligned, current], axis=-1), weights.fuse)


def propagate_features(state, completed_flows, masks, weights):
    """Bidirectional flow-guided deformable feature propagation.

    Features live at 1/8 frame resolution; flows are downsampled (and
    their magnitudes rescaled) to the feature grid before being used as
    per-tap base offsets.
    """
    feats = state.features
    n = len(feats)
    if len(completed_flows) != max(n - 1, 0) or len(masks) != n:
        raise ValueError("sequence lengths disagree")
    fh, fw = feats[0].shape[:2]
    frame_h = state.frames[0].shape[0] if state.frames else fh * 8
    if frame_h // fh not in (8,):
        raise ValueError("features must be at 1/8 frame resolution")

    masks_d = [downsample_mask(m, fh, fw) for m in masks]
    out = [f.copy() for f in feats]
    # backward sweep
    for t in range(n - 2, -1, -1):
        flow_d = downsample_flow(completed_flows[t].forward, fh, fw)
        out[t] = _align(feats[t], out[t + 1], masks_d[t], flow_d, weights)
    # forward sweep
    for t in range(1, n):
        flow_d = downsample_flow(completed_flows[t - 1].backward, fh, fw)
        out[t] = _align(out[t], out[t - 1], masks_d[t], flow_d, weights)
    result = state.copy()
    result.features = out
    return result
