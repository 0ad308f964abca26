"""End-to-end inpainting orchestration.

Scenes are directories of numbered PNG frames plus grayscale hole masks.
Processing downscales and pads the sequence, dilates the masks, plans a
local-neighbor/global-reference chunk per output frame, propagates
content along completed flows under a bounded frame-residency budget,
fills whatever remains harmonically, and composites the result back into
the originals at full resolution.
"""

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass, field

import cv2
import numpy as np

from . import weights_io
from .flow import (
    FlowCompletionWeights,
    FlowPair,
    complete_flow_harmonic,
    complete_flow_recurrent,
    estimate_flow,
    harmonic_fill,
)
from .kernels import conv2d, warp
from .propagation import (
    AlignmentWeights,
    PropagationState,
    compute_reliable_area,
    downsample_mask,
    propagate_features,
    propagate_image,
)
from .transformer import (
    TransformerConfig,
    TransformerWeights,
    count_attended_tokens,
    refine_sequence,
)


class SceneError(Exception):
    """Base class for scene loading failures."""


class CountMismatchError(SceneError):
    pass


class DimensionMismatchError(SceneError):
    pass


class FileReadError(SceneError):
    pass


@dataclass
class SceneConfig:
    scale_factor: float = 0.7
    dilation_radius: int = 4
    neighbor_count: int = 18
    ref_stride: int = 20
    eps_flow: float = 0.5
    mode: str = "classical"
    weights_path: str | None = None
    budget: int | None = None
    window_size: int = 8
    heads: int = 1

    def __post_init__(self):
        if not 0 < self.scale_factor <= 1:
            raise ValueError("scale_factor must be in (0, 1]")
        if self.neighbor_count < 1 or self.ref_stride < 1:
            raise ValueError("neighbor_count and ref_stride must be >= 1")
        if self.mode not in ("classical", "neural"):
            raise ValueError(f"unknown mode {self.mode!r}")


# ---------------------------------------------------------------------------
# scene I/O


def _numbered_pngs(directory):
    import os

    try:
        names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))
    except OSError as exc:
        raise FileReadError(f"cannot list {directory}: {exc}") from exc
    if not names:
        raise FileReadError(f"no PNG files in {directory}")
    if any(not re.fullmatch(r"\d+\.png", n, re.IGNORECASE) for n in names):
        raise FileReadError(f"{directory}: expected zero-padded numbered PNG names")
    return [f"{directory}/{n}" for n in names]


class PngSceneSource:
    """Lazily decoded (frame, mask) pairs backing the residency budget."""

    def __init__(self, frames_dir, masks_dir):
        self._frame_paths = _numbered_pngs(frames_dir)
        self._mask_paths = _numbered_pngs(masks_dir)
        if len(self._frame_paths) != len(self._mask_paths):
            raise CountMismatchError(
                f"{len(self._frame_paths)} frames vs {len(self._mask_paths)} masks"
            )
        self._dims = None

    def __len__(self):
        return len(self._frame_paths)

    def __getitem__(self, i):
        frame = cv2.imread(self._frame_paths[i], cv2.IMREAD_COLOR)
        if frame is None:
            raise FileReadError(f"cannot decode {self._frame_paths[i]}")
        mask = cv2.imread(self._mask_paths[i], cv2.IMREAD_GRAYSCALE)
        if mask is None:
            raise FileReadError(f"cannot decode {self._mask_paths[i]}")
        if frame.shape[:2] != mask.shape:
            raise DimensionMismatchError(
                f"frame {i}: frame {frame.shape[:2]} vs mask {mask.shape}"
            )
        if self._dims is None:
            self._dims = frame.shape[:2]
        elif frame.shape[:2] != self._dims:
            raise DimensionMismatchError(
                f"frame {i}: {frame.shape[:2]} differs from {self._dims}"
            )
        rgb = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB).astype(np.float64) / 255.0
        return rgb, mask >= 128


def load_scene(frames_dir, masks_dir):
    """Eagerly load a scene as a list of (frame, mask) pairs."""
    source = PngSceneSource(frames_dir, masks_dir)
    return [source[i] for i in range(len(source))]


# ---------------------------------------------------------------------------
# pre/post-processing


@dataclass(frozen=True)
class PreprocessRecord:
    orig_h: int
    orig_w: int
    scaled_h: int
    scaled_w: int
    pad_bottom: int
    pad_right: int


def _preprocess_record(h, w, scale):
    sh, sw = round(h * scale), round(w * scale)
    pad_b = (-sh) % 8
    pad_r = (-sw) % 8
    if sh + pad_b < 16 or sw + pad_r < 16:
        raise ValueError(f"processing resolution {sh}x{sw} is too small")
    return PreprocessRecord(h, w, sh, sw, pad_b, pad_r)


def preprocess_frame(frame, mask, cfg, record=None):
    h, w = frame.shape[:2]
    if record is None:
        record = _preprocess_record(h, w, cfg.scale_factor)
    if cfg.scale_factor != 1.0:
        frame = cv2.resize(
            frame, (record.scaled_w, record.scaled_h), interpolation=cv2.INTER_LINEAR
        )
        mask = (
            cv2.resize(
                mask.astype(np.uint8),
                (record.scaled_w, record.scaled_h),
                interpolation=cv2.INTER_NEAREST,
            )
            > 0
        )
    frame = np.pad(frame, ((0, record.pad_bottom), (0, record.pad_right), (0, 0)), mode="edge")
    mask = np.pad(mask, ((0, record.pad_bottom), (0, record.pad_right)), mode="edge")
    r = cfg.dilation_radius
    if r > 0 and mask.any():
        kernel = np.ones((2 * r + 1, 2 * r + 1), np.uint8)
        mask = cv2.dilate(mask.astype(np.uint8), kernel) > 0
    return np.asarray(frame, dtype=np.float64), mask, record


def preprocess(seq, cfg):
    """Downscale, pad to multiples of 8 and dilate masks; returns the
    processed sequence plus the record needed to invert it."""
    if not seq:
        raise ValueError("empty sequence")
    record = _preprocess_record(*seq[0][0].shape[:2], cfg.scale_factor)
    out = []
    for frame, mask in seq:
        pf, pm, _ = preprocess_frame(frame, mask, cfg, record)
        out.append((pf, pm))
    return out, record


def postprocess_frame(inpainted, original, original_mask, record):
    cropped = inpainted[: record.scaled_h, : record.scaled_w]
    if (record.scaled_h, record.scaled_w) != (record.orig_h, record.orig_w):
        restored = cv2.resize(
            cropped, (record.orig_w, record.orig_h), interpolation=cv2.INTER_LINEAR
        )
    else:
        restored = cropped
    mask3 = np.asarray(original_mask).astype(bool)[:, :, None]
    return np.where(mask3, np.clip(restored, 0.0, 1.0), original)


def postprocess(inpainted_seq, original_seq, original_masks, record):
    """Resize back and composite: pixels outside the original (undilated)
    mask are bit-identical to the originals."""
    if len(inpainted_seq) != len(original_seq) or len(original_masks) != len(original_seq):
        raise ValueError("sequence lengths differ")
    return [
        postprocess_frame(inp, orig, mask, record)
        for inp, orig, mask in zip(inpainted_seq, original_seq, original_masks)
    ]


# ---------------------------------------------------------------------------
# chunk planning and residency


@dataclass(frozen=True)
class ChunkPlan:
    n: int
    neighbor_count: int
    ref_stride: int

    def local_indices(self, t):
        nc = min(self.neighbor_count, self.n)
        lo = min(max(t - nc // 2, 0), self.n - nc)
        return list(range(lo, lo + nc))

    def reference_indices(self, t):
        locals_ = set(self.local_indices(t))
        return [r for r in range(0, self.n, self.ref_stride) if r not in locals_]

    def all_references(self):
        return list(range(0, self.n, self.ref_stride))


def plan_chunks(n, cfg):
    if n < 1:
        raise ValueError("need at least one frame")
    return ChunkPlan(n, cfg.neighbor_count, cfg.ref_stride)


class FrameCache:
    """Bounded working set over a lazy scene source.

    Evicts the least-recently-needed frame once the budget is reached;
    tracks the peak number of simultaneously resident frames.
    """

    def __init__(self, source, budget):
        self._source = source
        self.budget = budget
        self._cache = {}
        self.peak = 0

    def get(self, i):
        if i in self._cache:
            value = self._cache.pop(i)
            self._cache[i] = value  # refresh recency
            return value
        value = self._source[i]
        while len(self._cache) >= self.budget:
            self._cache.pop(next(iter(self._cache)))
        self._cache[i] = value
        self.peak = max(self.peak, len(self._cache))
        return value


# ---------------------------------------------------------------------------
# neural-mode image codec


@dataclass
class ImageCodecWeights:
    """Small 8x image encoder/decoder standing in for learned ones."""

    encoder: list
    decoder: list

    @classmethod
    def random(cls, seed=0, channels=8):
        rng = np.random.default_rng(seed)

        def conv(c_out, c_in, k=3):
            scale = 0.3 / np.sqrt(c_in * k * k)
            return (
                rng.normal(0.0, scale, size=(c_out, c_in, k, k)),
                rng.normal(0.0, 0.01, size=c_out),
            )

        c = channels
        return cls(
            encoder=[conv(c, 3), conv(c, c), conv(c, c)],
            decoder=[conv(c, c), conv(c, c), conv(3, c)],
        )

    def to_tensors(self):
        out = {}
        for group in ("encoder", "decoder"):
            for i, (w, b) in enumerate(getattr(self, group)):
                out[f"codec.{group}.{i}.weight"] = w
                out[f"codec.{group}.{i}.bias"] = b
        return out

    @classmethod
    def from_tensors(cls, tensors):
        def stack(group):
            layers = []
            i = 0
            while f"codec.{group}.{i}.weight" in tensors:
                layers.append(
                    (tensors[f"codec.{group}.{i}.weight"], tensors[f"codec.{group}.{i}.bias"])
                )
                i += 1
            return layers

        return cls(encoder=stack("encoder"), decoder=stack("decoder"))

    def encode(self, frame):
        x = frame
        for i, (w, b) in enumerate(self.encoder):
            x = conv2d(x, w, b, stride=2)
            if i < len(self.encoder) - 1:
                x = np.maximum(x, 0.0)
        return x

    def decode(self, feat, out_h, out_w):
        x = feat
        for i, (w, b) in enumerate(self.decoder):
            x = np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)
            x = conv2d(x, w, b)
            if i < len(self.decoder) - 1:
                x = np.maximum(x, 0.0)
        return x[:out_h, :out_w]


def make_neural_weights(seed=0, channels=8):
    """All named tensors needed for neural mode, randomly initialized."""
    tensors = {}
    tensors.update(FlowCompletionWeights.random(seed).to_tensors())
    tensors.update(AlignmentWeights.random(seed + 1, channels=channels).to_tensors())
    tensors.update(TransformerWeights.random(seed + 2, channels=channels).to_tensors())
    tensors.update(ImageCodecWeights.random(seed + 3, channels=channels).to_tensors())
    return tensors


# ---------------------------------------------------------------------------
# inpainting


def residual_fill(frame, mask):
    """Harmonic per-channel fill of any pixels still masked."""
    mask = np.asarray(mask).astype(bool)
    if not mask.any():
        return frame.copy()
    if mask.all():
        # no known pixels at all: neutral gray keeps the result total
        return np.full_like(frame, 0.5)
    out = frame.copy()
    for c in range(frame.shape[2]):
        out[:, :, c] = harmonic_fill(frame[:, :, c], mask)
    return out


class _FlowBank:
    """Memoized completed flow pairs between frame indices."""

    def __init__(self, cache, cfg, flow_hook, neural_weights, timings):
        self._cache = cache
        self._cfg = cfg
        self._hook = flow_hook
        self._neural = neural_weights
        self._timings = timings
        self._completed = {}

    def _raw_flow(self, i, j):
        frame_i, _ = self._cache.get(i)
        frame_j, _ = self._cache.get(j)
        if self._hook is not None:
            return self._hook(frame_i, frame_j, i, j)
        return estimate_flow(frame_i, frame_j)

    def completed_pair(self, i, j):
        """Completed FlowPair between frames i and j (i -> j forward)."""
        key = (i, j)
        if key in self._completed:
            return self._completed[key]
        t0 = time.perf_counter()
        fwd = self._raw_flow(i, j)
        bwd = self._raw_flow(j, i)
        self._timings["flow"] += time.perf_counter() - t0
        _, mask_i = self._cache.get(i)
        _, mask_j = self._cache.get(j)
        union = mask_i | mask_j
        t0 = time.perf_counter()
        if union.all():
            # no trustworthy motion anywhere; fall back to zero flow,
            # the harmonic solution with no boundary data
            fwd = np.zeros_like(fwd)
            bwd = np.zeros_like(bwd)
        elif union.any():
            fwd = complete_flow_harmonic(fwd, union)
            bwd = complete_flow_harmonic(bwd, union)
        self._timings["completion"] += time.perf_counter() - t0
        pair = FlowPair(fwd, bwd)
        self._completed[key] = pair
        if len(self._completed) > 4 * self._cfg.neighbor_count:
            self._completed.pop(next(iter(self._completed)))
        return pair

    def recurrent_pairs(self, indices, masks):
        """Neural-mode completion over a local window."""
        t0 = time.perf_counter()
        raw = []
        for a, b in zip(indices[:-1], indices[1:]):
            raw.append(FlowPair(self._raw_flow(a, b), self._raw_flow(b, a)))
        self._timings["flow"] += time.perf_counter() - t0
        unions = [masks[k] | masks[k + 1] for k in range(len(indices) - 1)]
        t0 = time.perf_counter()
        out = complete_flow_recurrent(raw, unions, self._neural["flow"])
        self._timings["completion"] += time.perf_counter() - t0
        return out


def _load_neural_weights(cfg):
    if cfg.weights_path is None:
        raise ValueError("neural mode requires a weights file")
    tensors = weights_io.load_weights(cfg.weights_path)
    return {
        "flow": FlowCompletionWeights.from_tensors(tensors),
        "align": AlignmentWeights.from_tensors(tensors),
        "refine": TransformerWeights.from_tensors(tensors),
        "codec": ImageCodecWeights.from_tensors(tensors),
    }


def _fill_from_reference(frame, mask, ref_frame, ref_mask, bank, r, t, eps):
    pair = bank.completed_pair(t, r)
    reliable = compute_reliable_area(pair, ~ref_mask, eps)
    fill = mask & reliable
    if fill.any():
        warped = warp(ref_frame, pair.forward)
        frame[fill] = warped[fill]
        mask = mask & ~fill
    return frame, mask


def inpaint_sequence(seq, cfg, flow_hook=None, sink=None, report=None):
    """Inpaint a preprocessed sequence chunk by chunk.

    ``seq`` is any indexable of (frame, mask) pairs. Output frames are
    returned as a list, or streamed to ``sink(t, frame)`` when given.
    Frames with empty masks are passed through untouched without any
    flow work. Every emitted frame is fully filled: residual harmonic
    fill guarantees totality.
    """
    n = len(seq)
    plan = plan_chunks(n, cfg)
    budget = cfg.budget
    if budget is None:
        budget = min(cfg.neighbor_count, n) + len(plan.all_references()) + 2
    cache = FrameCache(seq, budget)
    timings = {
        "flow": 0.0,
        "completion": 0.0,
        "propagation": 0.0,
        "refine": 0.0,
        "residual": 0.0,
    }
    neural = _load_neural_weights(cfg) if cfg.mode == "neural" else None
    bank = _FlowBank(cache, cfg, flow_hook, neural, timings)
    tcfg = TransformerConfig(window_size=cfg.window_size, heads=cfg.heads)

    attended = 0
    total_tokens = 0
    out_frames = [] if sink is None else None
    for t in range(n):
        frame_t, mask_t = cache.get(t)
        total_tokens += mask_t.size
        if not mask_t.any():
            result = frame_t.copy()
            if sink is None:
                out_frames.append(result)
            else:
                sink(t, result)
            continue
        attended += count_attended_tokens(mask_t, tcfg)

        locals_ = plan.local_indices(t)
        local_frames = [cache.get(i)[0].copy() for i in locals_]
        local_masks = [cache.get(i)[1].copy() for i in locals_]
        pos = locals_.index(t)

        if cfg.mode == "neural":
            flows = bank.recurrent_pairs(locals_, local_masks)
        else:
            flows = [bank.completed_pair(a, b) for a, b in zip(locals_[:-1], locals_[1:])]

        t0 = time.perf_counter()
        state = PropagationState(local_frames, local_masks)
        state = propagate_image(state, flows, cfg.eps_flow)
        timings["propagation"] += time.perf_counter() - t0

        frame = state.frames[pos]
        mask_left = state.masks[pos]

        if mask_left.any():
            for r in plan.reference_indices(t):
                ref_frame, ref_mask = cache.get(r)
                frame, mask_left = _fill_from_reference(
                    frame, mask_left, ref_frame, ref_mask, bank, r, t, cfg.eps_flow
                )
                if not mask_left.any():
                    break

        if cfg.mode == "neural" and neural is not None:
            t0 = time.perf_counter()
            codec = neural["codec"]
            feats = [codec.encode(f) for f in state.frames]
            fstate = PropagationState(state.frames, state.masks, feats)
            fstate = propagate_features(fstate, flows, state.masks, neural["align"])
            fh, fw = feats[0].shape[:2]
            masks_d = [downsample_mask(m, fh, fw) for m in state.masks]
            refined = refine_sequence(fstate.features, masks_d, neural["refine"], tcfg)
            decoded = codec.decode(refined[pos], frame.shape[0], frame.shape[1])
            if mask_left.any():
                frame[mask_left] = np.clip(decoded, 0.0, 1.0)[mask_left]
                mask_left = np.zeros_like(mask_left)
            timings["refine"] += time.perf_counter() - t0

        if mask_left.any():
            t0 = time.perf_counter()
            frame = residual_fill(frame, mask_left)
            timings["residual"] += time.perf_counter() - t0

        if sink is None:
            out_frames.append(frame)
        else:
            sink(t, frame)

    if report is not None:
        report["timings_ms"] = {k: round(v * 1000.0, 3) for k, v in timings.items()}
        report["peak_resident_frames"] = cache.peak
        report["attended_token_ratio"] = attended / total_tokens if total_tokens else 0.0
    return out_frames


# ---------------------------------------------------------------------------
# CLI


class _PreprocessedSource:
    def __init__(self, source, cfg, record):
        self._source = source
        self._cfg = cfg
        self._record = record

    def __len__(self):
        return len(self._source)

    def __getitem__(self, i):
        frame, mask = self._source[i]
        pf, pm, _ = preprocess_frame(frame, mask, self._cfg, self._record)
        return pf, pm


def _write_frame(path, frame):
    u8 = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8)
    cv2.imwrite(path, cv2.cvtColor(u8, cv2.COLOR_RGB2BGR))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="inpaint", description="Flow-guided streaming video inpainting."
    )
    parser.add_argument("--frames", required=True, help="directory of %%05d.png RGB frames")
    parser.add_argument("--masks", required=True, help="directory of %%05d.png hole masks")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--scale", type=float, default=0.7)
    parser.add_argument("--dilate", type=int, default=4)
    parser.add_argument("--neighbors", type=int, default=18)
    parser.add_argument("--ref-stride", type=int, default=20)
    parser.add_argument("--mode", choices=["classical", "neural"], default="classical")
    parser.add_argument("--weights", default=None)
    parser.add_argument("--budget", type=int, default=None)
    parser.add_argument("--report", default=None, help="write a JSON run report here")
    return parser


def run(argv=None):
    """CLI entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    cfg = SceneConfig(
        scale_factor=args.scale,
        dilation_radius=args.dilate,
        neighbor_count=args.neighbors,
        ref_stride=args.ref_stride,
        mode=args.mode,
        weights_path=args.weights,
        budget=args.budget,
    )
    import os

    try:
        source = PngSceneSource(args.frames, args.masks)
        first_frame, _ = source[0]
        record = _preprocess_record(*first_frame.shape[:2], cfg.scale_factor)
        processed = _PreprocessedSource(source, cfg, record)
        os.makedirs(args.out, exist_ok=True)

        report = {}
        t_start = time.perf_counter()

        def sink(t, frame):
            original, original_mask = source[t]
            final = postprocess_frame(frame, original, original_mask, record)
            _write_frame(f"{args.out}/{t:05d}.png", final)

        inpaint_sequence(processed, cfg, sink=sink, report=report)
        report["timings_ms"]["total"] = round((time.perf_counter() - t_start) * 1000.0, 3)
        report["frames"] = len(source)
        if args.report:
            with open(args.report, "w") as fh:
                json.dump(report, fh, indent=2)
    except (SceneError, ValueError, OSError) as exc:
        print(f"inpaint: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main():
    raise SystemExit(run())
