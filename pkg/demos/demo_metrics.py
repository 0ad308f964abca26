"""Weighted metric aggregation and leaderboard ranking.

Each entry provides four normalized error terms. Accuracy error averages
the MAE and PSNR terms, coherence error averages the FID and LPIPS
terms, and entries are ranked by coherence error with accuracy error as
the tie-breaker.
"""

from flowpaint.metrics import MetricReport, aggregate, rank

entries = {
    "Baseline": {"w_fid": 0.792, "w_mae": 0.257, "w_psnr": 0.255, "w_lpips": 0.791},
    "Team 1": {"w_fid": 0.075, "w_mae": 0.260, "w_psnr": 0.235, "w_lpips": 0.349},
    "Team 2": {"w_fid": 0.208, "w_mae": 0.263, "w_psnr": 0.244, "w_lpips": 0.439},
    "Team 3": {"w_fid": 0.079, "w_mae": 0.259, "w_psnr": 0.218, "w_lpips": 0.292},
    "Ours": {"w_fid": 0.071, "w_mae": 0.259, "w_psnr": 0.221, "w_lpips": 0.287},
}

reports = [
    MetricReport(name=name, normalized=dict(norm), aggregates=aggregate(norm))
    for name, norm in entries.items()
]

print(f"{'rank':>4}  {'entry':<10} {'c_error':>8} {'a_error':>8}")
for i, rep in enumerate(rank(reports), start=1):
    print(f"{i:>4}  {rep.name:<10} {rep.aggregates['c_error']:>8.3f} "
          f"{rep.aggregates['a_error']:>8.3f}")
