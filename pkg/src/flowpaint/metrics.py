"""Pixel metrics and challenge-style weighted error aggregation.

MAE and PSNR are reported on the conventional 8-bit scale regardless of
the unit-interval internal representation. Normalized (lower-is-better)
metric values are combined into an accuracy error (MAE + PSNR pair) and
a consistency error (FID + LPIPS pair); rankings sort by consistency
error first.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

PSNR_CAP_DB = 99.0


@dataclass
class AggregationWeights:
    """Convex weights within each metric pair; each pair must sum to 1."""

    alpha_mae: float = 0.5
    alpha_psnr: float = 0.5
    beta_fid: float = 0.5
    beta_lpips: float = 0.5

    def validate(self):
        for a, b, label in (
            (self.alpha_mae, self.alpha_psnr, "mae/psnr"),
            (self.beta_fid, self.beta_lpips, "fid/lpips"),
        ):
            if a < 0 or b < 0:
                raise ValueError(f"{label} weights must be non-negative")
            if abs(a + b - 1.0) > 1e-9:
                raise ValueError(f"{label} weights must sum to 1, got {a + b}")


@dataclass
class MetricReport:
    name: str = ""
    raw: dict = field(default_factory=dict)
    normalized: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "raw": self.raw,
            "normalized": self.normalized,
            "aggregates": self.aggregates,
        }


def _gather_errors(pred, gt, masks):
    if len(pred) != len(gt) or (masks is not None and len(masks) != len(pred)):
        raise ValueError("sequence lengths differ")
    chunks = []
    for i, (p, g) in enumerate(zip(pred, gt)):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if p.shape != g.shape:
            raise ValueError(f"frame {i}: shape mismatch {p.shape} vs {g.shape}")
        diff = (p - g) * 255.0
        if masks is not None:
            m = np.asarray(masks[i]).astype(bool)
            if m.shape != p.shape[:2]:
                raise ValueError(f"frame {i}: mask shape mismatch")
            diff = diff[m]
        chunks.append(diff.ravel())
    values = np.concatenate(chunks) if chunks else np.zeros(0)
    if values.size == 0:
        raise ValueError("no pixels included in the metric")
    return values


def mae(pred, gt, masks=None):
    """Mean absolute error on the 8-bit scale, over masked pixels only
    when masks are given."""
    return float(np.abs(_gather_errors(pred, gt, masks)).mean())


def psnr(pred, gt, masks=None):
    """Peak signal-to-noise ratio in dB (8-bit peak), capped at 99 dB
    for identical inputs."""
    mse = float(np.square(_gather_errors(pred, gt, masks)).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(255.0**2 / mse), PSNR_CAP_DB)


def ingest_external(scores_file):
    """Read externally computed normalized perceptual scores.

    The JSON file must contain finite numeric ``w_fid`` and ``w_lpips``;
    optional ``w_mae``/``w_psnr`` entries are passed through as well.
    """
    with open(scores_file) as fh:
        data = json.load(fh)
    out = {}
    for key in ("w_fid", "w_lpips"):
        if key not in data:
            raise ValueError(f"{scores_file}: missing field {key!r}")
        out[key] = _checked_number(data[key], key)
    for key in ("w_mae", "w_psnr"):
        if key in data:
            out[key] = _checked_number(data[key], key)
    return out


def _checked_number(value, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"field {key!r} is not numeric: {value!r}")
    if not math.isfinite(value):
        raise ValueError(f"field {key!r} is not finite: {value!r}")
    return float(value)


def aggregate(normalized, weights=None):
    """Combine normalized metrics into accuracy and consistency errors."""
    weights = weights or AggregationWeights()
    weights.validate()
    missing = {"w_mae", "w_psnr", "w_fid", "w_lpips"} - set(normalized)
    if missing:
        raise ValueError(f"missing normalized metrics: {sorted(missing)}")
    for key, value in normalized.items():
        if not math.isfinite(value):
            raise ValueError(f"{key} is not finite")
    return {
        "a_error": weights.alpha_mae * normalized["w_mae"]
        + weights.alpha_psnr * normalized["w_psnr"],
        "c_error": weights.beta_fid * normalized["w_fid"]
        + weights.beta_lpips * normalized["w_lpips"],
    }


def rank(reports):
    """Sort ascending by consistency error, then accuracy error, then
    name."""
    for rep in reports:
        if "c_error" not in rep.aggregates or "a_error" not in rep.aggregates:
            raise ValueError(f"report {rep.name!r} is missing aggregates")
    return sorted(
        reports,
        key=lambda r: (r.aggregates["c_error"], r.aggregates["a_error"], r.name),
    )
