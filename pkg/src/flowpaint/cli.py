"""Command line entry points: ``inpaint`` and ``evaluate``."""

import argparse
import json
import sys

from . import metrics
from .pipeline import SceneError, load_scene
from .pipeline import main as inpaint_main  # noqa: F401  (console script)
from .pipeline import run as inpaint_run  # noqa: F401


def build_evaluate_parser():
    parser = argparse.ArgumentParser(
        prog="evaluate", description="Pixel metrics and weighted error aggregation."
    )
    parser.add_argument("--pred", required=True, help="directory of predicted frames")
    parser.add_argument("--gt", required=True, help="directory of ground-truth frames")
    parser.add_argument("--masks", default=None, help="optional mask directory")
    parser.add_argument("--external", default=None, help="JSON with normalized scores")
    parser.add_argument(
        "--weights",
        default="0.5,0.5,0.5,0.5",
        help="alpha_mae,alpha_psnr,beta_fid,beta_lpips",
    )
    parser.add_argument("--report", default=None, help="write the JSON report here")
    return parser


def _parse_weights(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("--weights needs four comma-separated values")
    return metrics.AggregationWeights(*parts)


def evaluate_run(argv=None):
    args = build_evaluate_parser().parse_args(argv)
    try:
        weights = _parse_weights(args.weights)
        weights.validate()
        pred = [f for f, _ in load_scene(args.pred, args.pred)]
        gt = [f for f, _ in load_scene(args.gt, args.gt)]
        mask_seq = None
        if args.masks:
            mask_seq = [m for _, m in load_scene(args.masks, args.masks)]
        report = metrics.MetricReport(name=args.pred)
        report.raw["mae"] = metrics.mae(pred, gt, mask_seq)
        report.raw["psnr"] = metrics.psnr(pred, gt, mask_seq)
        if args.external:
            report.normalized.update(metrics.ingest_external(args.external))
        if {"w_mae", "w_psnr", "w_fid", "w_lpips"} <= set(report.normalized):
            report.aggregates = metrics.aggregate(report.normalized, weights)
        payload = report.to_dict()
        text = json.dumps(payload, indent=2)
        print(text)
        if args.report:
            with open(args.report, "w") as fh:
                fh.write(text + "\n")
    except (SceneError, ValueError, OSError) as exc:
        print(f"evaluate: error: {exc}", file=sys.stderr)
        return 1
    return 0


def evaluate_main():
    raise SystemExit(evaluate_run())
