import json

import numpy as np
import pytest

from flowpaint.metrics import (
    AggregationWeights,
    MetricReport,
    aggregate,
    ingest_external,
    mae,
    psnr,
    rank,
)

# published cross-validation and leaderboard figures the aggregation
# arithmetic must reproduce
LOCAL_OURS = {"w_mae": 0.293, "w_psnr": 0.232, "w_fid": 0.224, "w_lpips": 0.329}
LEADERBOARD = {
    "Baseline": {"w_fid": 0.792, "w_mae": 0.257, "w_psnr": 0.255, "w_lpips": 0.791},
    "Team 1": {"w_fid": 0.075, "w_mae": 0.260, "w_psnr": 0.235, "w_lpips": 0.349},
    "Team 2": {"w_fid": 0.208, "w_mae": 0.263, "w_psnr": 0.244, "w_lpips": 0.439},
    "Team 3": {"w_fid": 0.079, "w_mae": 0.259, "w_psnr": 0.218, "w_lpips": 0.292},
    "Ours": {"w_fid": 0.071, "w_mae": 0.259, "w_psnr": 0.221, "w_lpips": 0.287},
}


class TestMae:
    def test_identical(self):
        frames = [np.full((4, 4, 3), 0.5)]
        assert mae(frames, frames) == 0.0

    def test_constant_offset(self):
        gt = [np.full((4, 4, 3), 0.2)]
        pred = [gt[0] + 10.0 / 255.0]
        assert mae(pred, gt) == pytest.approx(10.0)

    def test_masked_vs_unmasked(self):
        gt = [np.full((4, 4, 3), 0.2)]
        pred = [gt[0].copy()]
        mask = np.zeros((4, 4), bool)
        mask[:2, :] = True
        pred[0][mask] += 10.0 / 255.0
        assert mae(pred, gt, [mask]) == pytest.approx(10.0)
        assert mae(pred, gt) == pytest.approx(5.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mae([np.zeros((4, 4, 3))], [np.zeros((4, 5, 3))])

    def test_nonnegative_zero_iff_equal(self):
        rng = np.random.default_rng(0)
        a = [rng.random((6, 6, 3))]
        b = [rng.random((6, 6, 3))]
        assert mae(a, b) > 0
        assert mae(a, a) == 0.0


class TestPsnr:
    def test_identical_capped(self):
        frames = [np.full((4, 4, 3), 0.5)]
        assert psnr(frames, frames) == 99.0

    def test_uniform_error(self):
        gt = [np.full((8, 8, 3), 0.5)]
        pred = [gt[0] + 10.0 / 255.0]
        assert psnr(pred, gt) == pytest.approx(20 * np.log10(255 / 10), abs=1e-6)

    def test_black_vs_white(self):
        assert psnr([np.zeros((4, 4, 3))], [np.ones((4, 4, 3))]) == pytest.approx(0.0)

    def test_decreasing_in_mse(self):
        gt = [np.full((8, 8, 3), 0.5)]
        values = [psnr([gt[0] + e / 255.0], gt) for e in (1, 5, 20, 80)]
        assert all(a > b for a, b in zip(values, values[1:]))


class TestIngestExternal:
    def test_valid(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"w_fid": 0.224, "w_lpips": 0.329}))
        assert ingest_external(path) == {"w_fid": 0.224, "w_lpips": 0.329}

    def test_perfect_scores(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"w_fid": 0.0, "w_lpips": 0.0}))
        assert ingest_external(path) == {"w_fid": 0.0, "w_lpips": 0.0}

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"w_fid": "x", "w_lpips": 0.1}))
        with pytest.raises(ValueError):
            ingest_external(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"w_fid": 0.1}))
        with pytest.raises(ValueError):
            ingest_external(path)


class TestAggregate:
    def test_reproduces_local_results(self):
        agg = aggregate(LOCAL_OURS)
        assert agg["a_error"] == pytest.approx(0.263, abs=1e-3)
        assert agg["c_error"] == pytest.approx(0.276, abs=1e-3)

    def test_reproduces_leaderboard_row(self):
        agg = aggregate(LEADERBOARD["Ours"])
        assert agg["a_error"] == pytest.approx(0.240, abs=1e-3)
        assert agg["c_error"] == pytest.approx(0.179, abs=1e-3)

    def test_all_zero(self):
        zeros = {k: 0.0 for k in LOCAL_OURS}
        assert aggregate(zeros) == {"a_error": 0.0, "c_error": 0.0}

    def test_invalid_weight_pair(self):
        with pytest.raises(ValueError):
            aggregate(LOCAL_OURS, AggregationWeights(0.7, 0.5, 0.5, 0.5))

    def test_linear_in_inputs(self):
        rng = np.random.default_rng(1)
        norm = {k: float(v) for k, v in zip(LOCAL_OURS, rng.random(4))}
        s = 3.7
        scaled = {k: v * s for k, v in norm.items()}
        a1, a2 = aggregate(norm), aggregate(scaled)
        assert a2["a_error"] == pytest.approx(s * a1["a_error"])
        assert a2["c_error"] == pytest.approx(s * a1["c_error"])


class TestRank:
    def _reports(self, scale=1.0):
        reports = []
        for name, norm in LEADERBOARD.items():
            rep = MetricReport(name=name, normalized=dict(norm))
            rep.aggregates = {
                k: v * scale for k, v in aggregate(norm).items()
            }
            reports.append(rep)
        return reports

    def test_leaderboard_order(self):
        ordered = rank(self._reports())
        assert [r.name for r in ordered] == ["Ours", "Team 3", "Team 1", "Team 2", "Baseline"]

    def test_tie_broken_by_a_error(self):
        a = MetricReport(name="a", aggregates={"c_error": 0.5, "a_error": 0.2})
        b = MetricReport(name="b", aggregates={"c_error": 0.5, "a_error": 0.1})
        assert [r.name for r in rank([a, b])] == ["b", "a"]

    def test_single_report(self):
        rep = MetricReport(name="only", aggregates={"c_error": 1.0, "a_error": 1.0})
        assert rank([rep]) == [rep]

    def test_missing_aggregate(self):
        with pytest.raises(ValueError):
            rank([MetricReport(name="x")])

    def test_argmin_invariant_under_rescaling(self):
        best = rank(self._reports())[0].name
        assert rank(self._reports(scale=17.0))[0].name == best
