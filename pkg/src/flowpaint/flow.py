"""Optical flow estimation and flow completion.

Flow estimation is a classical coarse-to-fine pyramidal Lucas-Kanade
solver. Completion of flow inside occluded regions comes in two flavors:
a deterministic harmonic (Laplace) fill, and a recurrent propagation
graph over 8x-downsampled flow features with loadable weights.
"""

from dataclasses import dataclass

import cv2
import numpy as np
from scipy.ndimage import uniform_filter

from .kernels import bilinear_sample_map, conv2d, deformable_conv, warp

DCN_KERNEL = 3
FLOW_FEAT_CHANNELS = 64


@dataclass(frozen=True)
class FlowPair:
    """Bidirectional flow between two frames (t -> t+1 and t+1 -> t)."""

    forward: np.ndarray
    backward: np.ndarray

    def __post_init__(self):
        if self.forward.shape != self.backward.shape:
            raise ValueError("forward/backward flow shapes differ")

    def swapped(self):
        return FlowPair(self.backward, self.forward)


def _to_gray(frame):
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3:
        return frame @ np.array([0.299, 0.587, 0.114])
    return frame


def estimate_flow(frame_a, frame_b, window=15, iterations=8, grad_floor=1e-4):
    """Pyramidal Lucas-Kanade flow from ``frame_a`` to ``frame_b``.

    Returns an H x W x 2 field in the backward-warp convention:
    warp(frame_b, flow) approximates frame_a. Textureless regions
    (windowed gradient energy below ``grad_floor``) get zero flow.
    """
    a = _to_gray(frame_a)
    b = _to_gray(frame_b)
    if a.shape != b.shape:
        raise ValueError(f"frame dims differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    levels = max(1, int(np.floor(np.log2(min(h, w) / 16))))

    pyr_a, pyr_b = [a], [b]
    for _ in range(levels - 1):
        pyr_a.append(cv2.pyrDown(pyr_a[-1]))
        pyr_b.append(cv2.pyrDown(pyr_b[-1]))

    u = np.zeros(pyr_a[-1].shape)
    v = np.zeros(pyr_a[-1].shape)
    for level in range(levels - 1, -1, -1):
        i1, i2 = pyr_a[level], pyr_b[level]
        lh, lw = i1.shape
        if u.shape != i1.shape:
            u = cv2.resize(u, (lw, lh), interpolation=cv2.INTER_LINEAR) * 2.0
            v = cv2.resize(v, (lw, lh), interpolation=cv2.INTER_LINEAR) * 2.0
        for _ in range(iterations):
            flow = np.stack([u, v], axis=-1)
            i2w = warp(i2, flow)
            iy, ix = np.gradient(i2w)
            it = i2w - i1
            sxx = uniform_filter(ix * ix, window)
            sxy = uniform_filter(ix * iy, window)
            syy = uniform_filter(iy * iy, window)
            sxt = uniform_filter(ix * it, window)
            syt = uniform_filter(iy * it, window)
            det = sxx * syy - sxy * sxy
            solvable = (det > 1e-12) & (sxx + syy > grad_floor)
            det_safe = np.where(solvable, det, 1.0)
            du = (-syy * sxt + sxy * syt) / det_safe
            dv = (sxy * sxt - sxx * syt) / det_safe
            step = float(window)
            u = u + np.where(solvable, np.clip(du, -step, step), 0.0)
            v = v + np.where(solvable, np.clip(dv, -step, step), 0.0)

    # zero out flow where the reference frame is locally textureless
    iy1, ix1 = np.gradient(pyr_a[0])
    energy = uniform_filter(ix1 * ix1 + iy1 * iy1, window)
    textured = energy > grad_floor
    return np.stack([np.where(textured, u, 0.0), np.where(textured, v, 0.0)], axis=-1)


def harmonic_fill(field, mask, tol=1e-5, max_sweeps=10_000):
    """Fill masked values of a 2-D field by Laplace relaxation.

    Unmasked pixels act as Dirichlet boundary data and are returned
    unchanged bit-exact. Jacobi sweeps run until the largest update falls
    below ``tol`` or ``max_sweeps`` is reached. The filled values obey
    the discrete maximum principle with respect to the hole boundary.
    """
    field = np.asarray(field, dtype=np.float64)
    mask = np.asarray(mask).astype(bool)
    if field.shape != mask.shape:
        raise ValueError("field/mask shapes differ")
    if not mask.any():
        return field.copy()
    if mask.all():
        raise ValueError("mask covers the entire field: no boundary data")

    # initialize the hole with the mean of hole-adjacent known pixels so
    # every iterate stays inside the boundary value range
    grown = cv2.dilate(mask.astype(np.uint8), np.ones((3, 3), np.uint8)) > 0
    boundary = grown & ~mask
    init = field[boundary].mean() if boundary.any() else field[~mask].mean()

    cur = field.copy()
    cur[mask] = init
    for _ in range(max_sweeps):
        padded = np.pad(cur, 1, mode="edge")
        avg = 0.25 * (
            padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]
        )
        nxt = np.where(mask, avg, cur)
        residual = np.abs(nxt - cur)[mask].max()
        cur = nxt
        if residual < tol:
            break
    return cur


def complete_flow_harmonic(flow, mask):
    """Replace flow inside the mask by its harmonic extension."""
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape[:2] != np.asarray(mask).shape:
        raise ValueError("flow/mask shapes differ")
    u = harmonic_fill(flow[:, :, 0], mask)
    v = harmonic_fill(flow[:, :, 1], mask)
    return np.stack([u, v], axis=-1)


def flow_consistency(pair, eps=0.5):
    """Forward-backward consistency map: 1 where the round trip closes.

    A pixel is consistent when |forward(p) + backward(p + forward(p))|
    is below ``eps`` (the backward field sampled bilinearly).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    fwd = np.asarray(pair.forward, dtype=np.float64)
    h, w = fwd.shape[:2]
    gy, gx = np.mgrid[0:h, 0:w]
    back = bilinear_sample_map(pair.backward, gy + fwd[:, :, 1], gx + fwd[:, :, 0])
    residual = np.linalg.norm(fwd + back, axis=-1)
    return residual < eps


# ---------------------------------------------------------------------------
# recurrent flow completion graph


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _conv_stack(x, layers, stride=1):
    for i, (w, b) in enumerate(layers):
        x = conv2d(x, w, b, stride=stride)
        if i < len(layers) - 1:
            x = _relu(x)
    return x


def _upsample2(x):
    return np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)


@dataclass
class FlowCompletionWeights:
    """Parameters of the recurrent completion graph.

    Channel plan: encoder 2 -> 32 -> 64 over three stride-2 convs (net 8x
    downsampling); a two-conv offset predictor emitting per-tap offsets
    and modulation logits; a deformable alignment kernel plus a fusion
    stack per propagation direction; a mirrored decoder with nearest-
    neighbor upsampling back to 2 flow channels.
    """

    encoder: list
    offset_backward: list
    offset_forward: list
    dcn_backward: tuple
    dcn_forward: tuple
    fuse_backward: list
    fuse_forward: list
    decoder: list

    @classmethod
    def random(cls, seed=0):
        rng = np.random.default_rng(seed)

        def conv(c_out, c_in, k=3):
            scale = 0.3 / np.sqrt(c_in * k * k)
            return (
                rng.normal(0.0, scale, size=(c_out, c_in, k, k)),
                rng.normal(0.0, 0.01, size=c_out),
            )

        k = DCN_KERNEL * DCN_KERNEL
        c = FLOW_FEAT_CHANNELS
        return cls(
            encoder=[conv(32, 2), conv(64, 32), conv(c, 64)],
            offset_backward=[conv(64, 2 * c), conv(3 * k, 64)],
            offset_forward=[conv(64, 2 * c), conv(3 * k, 64)],
            dcn_backward=conv(c, c),
            dcn_forward=conv(c, c),
            fuse_backward=[conv(64, 2 * c), conv(c, 64)],
            fuse_forward=[conv(64, 2 * c), conv(c, 64)],
            decoder=[conv(32, c), conv(16, 32), conv(2, 16)],
        )

    def to_tensors(self):
        out = {}
        for group in (
            "encoder",
            "offset_backward",
            "offset_forward",
            "fuse_backward",
            "fuse_forward",
            "decoder",
        ):
            for i, (w, b) in enumerate(getattr(self, group)):
                out[f"flow.{group}.{i}.weight"] = w
                out[f"flow.{group}.{i}.bias"] = b
        for group in ("dcn_backward", "dcn_forward"):
            w, b = getattr(self, group)
            out[f"flow.{group}.weight"] = w
            out[f"flow.{group}.bias"] = b
        return out

    @classmethod
    def from_tensors(cls, tensors):
        def stack(group):
            layers = []
            i = 0
            while f"flow.{group}.{i}.weight" in tensors:
                layers.append(
                    (tensors[f"flow.{group}.{i}.weight"], tensors[f"flow.{group}.{i}.bias"])
                )
                i += 1
            if not layers:
                raise ValueError(f"weight container is missing flow.{group}")
            return layers

        def single(group):
            return (tensors[f"flow.{group}.weight"], tensors[f"flow.{group}.bias"])

        return cls(
            encoder=stack("encoder"),
            offset_backward=stack("offset_backward"),
            offset_forward=stack("offset_forward"),
            dcn_backward=single("dcn_backward"),
            dcn_forward=single("dcn_forward"),
            fuse_backward=stack("fuse_backward"),
            fuse_forward=stack("fuse_forward"),
            decoder=stack("decoder"),
        )


def _encode(flow, weights):
    x = np.asarray(flow, dtype=np.float64)
    for i, (w, b) in enumerate(weights.encoder):
        x = conv2d(x, w, b, stride=2)
        if i < len(weights.encoder) - 1:
            x = _relu(x)
    return x


def _decode(feat, weights, out_h, out_w):
    x = feat
    for i, (w, b) in enumerate(weights.decoder):
        x = _upsample2(x)
        x = conv2d(x, w, b)
        if i < len(weights.decoder) - 1:
            x = _relu(x)
    return x[:out_h, :out_w]


def predict_offsets(cur, neighbor, layers, taps):
    """Offsets (H, W, K, 2) and sigmoid-squashed modulation (H, W, K)
    predicted from channel-concatenated current/neighbor features."""
    x = np.concatenate([cur, neighbor], axis=-1)
    raw = _conv_stack(x, layers)
    h, w = raw.shape[:2]
    offsets = raw[:, :, : 2 * taps].reshape(h, w, taps, 2)
    modulation = _sigmoid(raw[:, :, 2 * taps :])
    return offsets, modulation


def _propagate(feats, offset_layers, dcn, fuse_layers, reverse):
    taps = DCN_KERNEL * DCN_KERNEL
    dcn_w, dcn_b = dcn
    out = list(feats)
    order = range(len(feats) - 2, -1, -1) if reverse else range(1, len(feats))
    step = 1 if reverse else -1
    for t in order:
        neighbor = out[t + step]
        offsets, modulation = predict_offsets(feats[t], neighbor, offset_layers, taps)
        aligned = deformable_conv(neighbor, offsets, modulation, dcn_w, dcn_b)
        out[t] = _conv_stack(np.concatenate([aligned, feats[t]], axis=-1), fuse_layers)
    return out


def _complete_sequence(flows, masks, weights):
    h, w = flows[0].shape[:2]
    feats = [_encode(f, weights) for f in flows]
    feats = _propagate(
        feats, weights.offset_backward, weights.dcn_backward, weights.fuse_backward, True
    )
    feats = _propagate(
        feats, weights.offset_forward, weights.dcn_forward, weights.fuse_forward, False
    )
    out = []
    for flow, feat, mask in zip(flows, feats, masks):
        decoded = _decode(feat, weights, h, w)
        mask3 = np.asarray(mask).astype(bool)[:, :, None]
        out.append(np.where(mask3, decoded, flow))
    return out


def complete_flow_recurrent(flows, masks, weights):
    """Complete masked flow via the bidirectional recurrent graph.

    ``flows`` is a list of FlowPair, ``masks`` a matching list of binary
    hole maps at flow resolution. Flow outside the masks is returned
    unchanged bit-exact (masked blend of the decoded output).
    """
    if len(flows) != len(masks):
        raise ValueError("flows and masks lengths differ")
    for pair, mask in zip(flows, masks):
        if pair.forward.shape[:2] != np.asarray(mask).shape:
            raise ValueError("flow/mask shapes differ")
    fwd = _complete_sequence([p.forward for p in flows], masks, weights)
    bwd = _complete_sequence([p.backward for p in flows], masks, weights)
    return [FlowPair(f, b) for f, b in zip(fwd, bwd)]
