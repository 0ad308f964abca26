import numpy as np
import pytest
from scipy.ndimage import correlate, gaussian_filter

from flowpaint.flow import (
    FlowCompletionWeights,
    FlowPair,
    complete_flow_harmonic,
    complete_flow_recurrent,
    estimate_flow,
    flow_consistency,
    harmonic_fill,
)
from flowpaint.kernels import bilinear_sample_map
from oracles import scalar_bilinear


def translating_pair(rng, h=64, w=64, shift=2, smooth=2.0):
    """Textured frame pair where content moves right by ``shift`` px:
    a(p) = b(p + (shift, 0))."""
    tex = gaussian_filter(rng.random((h, w + shift)), smooth)
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    a = tex[:, shift:]
    b = tex[:, : w]
    return a, b


class TestEstimateFlow:
    def test_identical_frames_near_zero(self):
        rng = np.random.default_rng(0)
        frame = gaussian_filter(rng.random((64, 64)), 2.0)
        flow = estimate_flow(frame, frame)
        assert np.linalg.norm(flow, axis=-1).max() <= 0.1

    def test_integer_translation(self):
        rng = np.random.default_rng(1)
        a, b = translating_pair(rng)
        flow = estimate_flow(a, b)
        epe = np.linalg.norm(flow - np.array([2.0, 0.0]), axis=-1)
        assert epe.mean() <= 0.5

    def test_constant_color_zero_flow(self):
        a = np.full((48, 48), 0.3)
        b = np.full((48, 48), 0.3)
        assert np.array_equal(estimate_flow(a, b), np.zeros((48, 48, 2)))

    def test_antisymmetry_on_translation(self):
        rng = np.random.default_rng(2)
        a, b = translating_pair(rng)
        fwd = estimate_flow(a, b)
        bwd = estimate_flow(b, a)
        assert np.linalg.norm(fwd + bwd, axis=-1).mean() <= 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            estimate_flow(np.zeros((32, 32)), np.zeros((32, 33)))

    def test_rgb_frames_accepted(self):
        rng = np.random.default_rng(3)
        frame = gaussian_filter(rng.random((48, 48, 3)), (2, 2, 0))
        flow = estimate_flow(frame, frame)
        assert flow.shape == (48, 48, 2)


class TestHarmonicFill:
    def test_empty_mask_identity(self):
        rng = np.random.default_rng(4)
        field = rng.random((12, 12))
        assert np.array_equal(harmonic_fill(field, np.zeros((12, 12), bool)), field)

    def test_constant_restored(self):
        flow = np.zeros((20, 20, 2))
        flow[:, :, 0] = 3.0
        flow[:, :, 1] = -1.0
        mask = np.zeros((20, 20), bool)
        mask[6:14, 6:14] = True
        noisy = flow.copy()
        noisy[mask] = (99.0, 99.0)
        out = complete_flow_harmonic(noisy, mask)
        assert np.abs(out - flow).max() <= 1e-4

    def test_linear_ramp_restored(self):
        gy, gx = np.mgrid[0:24, 0:24]
        ramp = gx.astype(float)
        mask = np.zeros((24, 24), bool)
        mask[8:16, 8:16] = True
        broken = ramp.copy()
        broken[mask] = -50.0
        out = harmonic_fill(broken, mask)
        assert np.abs(out - ramp).max() <= 1e-3

    def test_unmasked_pixels_bit_exact(self):
        rng = np.random.default_rng(5)
        field = rng.random((16, 16))
        mask = rng.random((16, 16)) < 0.2
        mask[0, :] = False  # keep some boundary
        out = harmonic_fill(field, mask)
        assert np.array_equal(out[~mask], field[~mask])

    def test_maximum_principle(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            field = rng.random((14, 14))
            mask = np.zeros((14, 14), bool)
            y, x = rng.integers(1, 8, size=2)
            mask[y : y + 5, x : x + 5] = True
            out = harmonic_fill(field, mask)
            grown = np.zeros_like(mask)
            grown[max(y - 1, 0) : y + 6, max(x - 1, 0) : x + 6] = True
            boundary = grown & ~mask
            assert out[mask].min() >= field[boundary].min() - 1e-9
            assert out[mask].max() <= field[boundary].max() + 1e-9

    def test_full_mask_rejected(self):
        with pytest.raises(ValueError):
            harmonic_fill(np.zeros((8, 8)), np.ones((8, 8), bool))


class TestFlowConsistency:
    def _uniform_pair(self, u_f, u_b, h=10, w=10):
        fwd = np.zeros((h, w, 2))
        bwd = np.zeros((h, w, 2))
        fwd[:, :, 0] = u_f
        bwd[:, :, 0] = u_b
        return FlowPair(fwd, bwd)

    def test_consistent_pair_all_valid(self):
        valid = flow_consistency(self._uniform_pair(1.0, -1.0), eps=0.5)
        assert valid.all()

    def test_inconsistent_pair_all_invalid(self):
        valid = flow_consistency(self._uniform_pair(1.0, 0.0), eps=0.5)
        assert not valid.any()

    def test_smooth_constructed_pair_mostly_valid(self):
        gy, gx = np.mgrid[0:32, 0:32]
        fwd = np.zeros((32, 32, 2))
        fwd[:, :, 0] = 1.5 * np.sin(gy / 10.0)
        fwd[:, :, 1] = 1.0 * np.cos(gx / 12.0)
        # backward field such that backward(p + forward(p)) = -forward(p)
        bwd = np.zeros((32, 32, 2))
        ys = gy + fwd[:, :, 1]
        xs = gx + fwd[:, :, 0]
        for c in range(2):
            # scatter by nearest neighbor, then smooth nothing: direct sample
            bwd[:, :, c] = -bilinear_sample_map(fwd[:, :, c], ys, xs)[:, :, 0]
        # this is only approximately the inverse; most pixels must close
        valid = flow_consistency(FlowPair(fwd, bwd), eps=0.5)
        assert valid.mean() >= 0.95

    def test_bad_eps(self):
        with pytest.raises(ValueError):
            flow_consistency(self._uniform_pair(0, 0), eps=0.0)


# ---------------------------------------------------------------------------
# recurrent completion graph, checked against a straight-line oracle


def conv_ref(x, w, b, stride=1):
    c_out = w.shape[0]
    out = np.stack(
        [
            sum(
                correlate(x[:, :, ci], w[co, ci], mode="nearest")
                for ci in range(w.shape[1])
            )
            + b[co]
            for co in range(c_out)
        ],
        axis=-1,
    )
    return out[::stride, ::stride]


def stack_ref(x, layers, stride=1):
    for i, (w, b) in enumerate(layers):
        x = conv_ref(x, w, b, stride=stride)
        if i < len(layers) - 1:
            x = np.maximum(x, 0.0)
    return x


def dcn_ref(src, offsets, modulation, w, b):
    from oracles import deformable_conv_oracle

    return deformable_conv_oracle(src, offsets, modulation, w, b)


def complete_sequence_ref(flows, masks, wts):
    """Non-recurrent re-evaluation of the completion graph."""
    h, w = flows[0].shape[:2]
    taps = 9

    def encode(f):
        x = f
        for i, (cw, cb) in enumerate(wts.encoder):
            x = conv_ref(x, cw, cb, stride=2)
            if i < len(wts.encoder) - 1:
                x = np.maximum(x, 0.0)
        return x

    def offsets_from(cur, nb, layers):
        raw = stack_ref(np.concatenate([cur, nb], axis=-1), layers)
        hh, ww = raw.shape[:2]
        off = raw[:, :, : 2 * taps].reshape(hh, ww, taps, 2)
        mod = 1.0 / (1.0 + np.exp(-raw[:, :, 2 * taps :]))
        return off, mod

    feats = [encode(f) for f in flows]
    cur = list(feats)
    for t in range(len(flows) - 2, -1, -1):
        off, mod = offsets_from(feats[t], cur[t + 1], wts.offset_backward)
        aligned = dcn_ref(cur[t + 1], off, mod, *wts.dcn_backward)
        cur[t] = stack_ref(np.concatenate([aligned, feats[t]], axis=-1), wts.fuse_backward)
    # the forward pass consumes the backward pass's output as its input
    for t in range(1, len(flows)):
        off, mod = offsets_from(cur[t], cur[t - 1], wts.offset_forward)
        aligned = dcn_ref(cur[t - 1], off, mod, *wts.dcn_forward)
        cur[t] = stack_ref(np.concatenate([aligned, cur[t]], axis=-1), wts.fuse_forward)

    out = []
    for f, feat, m in zip(flows, cur, masks):
        x = feat
        for i, (cw, cb) in enumerate(wts.decoder):
            x = np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)
            x = conv_ref(x, cw, cb)
            if i < len(wts.decoder) - 1:
                x = np.maximum(x, 0.0)
        decoded = x[:h, :w]
        out.append(np.where(m[:, :, None], decoded, f))
    return out


@pytest.fixture(scope="module")
def recurrent_weights():
    return FlowCompletionWeights.random(seed=42)


class TestRecurrentCompletion:
    def _random_sequence(self, rng, n=3, h=32, w=32, holes=True):
        flows, masks = [], []
        for _ in range(n):
            flows.append(
                FlowPair(rng.normal(0, 1, (h, w, 2)), rng.normal(0, 1, (h, w, 2)))
            )
            mask = np.zeros((h, w), bool)
            if holes:
                y, x = rng.integers(4, h - 12, size=2)
                mask[y : y + 8, x : x + 8] = True
            masks.append(mask)
        return flows, masks

    def test_empty_masks_identity_bit_exact(self, recurrent_weights):
        rng = np.random.default_rng(7)
        flows, masks = self._random_sequence(rng, holes=False)
        out = complete_flow_recurrent(flows, masks, recurrent_weights)
        for a, b in zip(out, flows):
            assert np.array_equal(a.forward, b.forward)
            assert np.array_equal(a.backward, b.backward)

    def test_single_frame_sequence(self, recurrent_weights):
        rng = np.random.default_rng(8)
        flows, masks = self._random_sequence(rng, n=1)
        out = complete_flow_recurrent(flows, masks, recurrent_weights)
        assert len(out) == 1
        assert out[0].forward.shape == flows[0].forward.shape
        # unmasked flow untouched
        assert np.array_equal(out[0].forward[~masks[0]], flows[0].forward[~masks[0]])

    def test_deterministic_and_matches_graph_oracle(self, recurrent_weights):
        rng = np.random.default_rng(9)
        flows, masks = self._random_sequence(rng)
        out1 = complete_flow_recurrent(flows, masks, recurrent_weights)
        out2 = complete_flow_recurrent(flows, masks, recurrent_weights)
        for a, b in zip(out1, out2):
            assert np.array_equal(a.forward, b.forward)
            assert np.array_equal(a.backward, b.backward)

        ref_fwd = complete_sequence_ref(
            [p.forward for p in flows], masks, recurrent_weights
        )
        for a, r in zip(out1, ref_fwd):
            assert np.abs(a.forward - r).max() <= 1e-6

    def test_length_mismatch(self, recurrent_weights):
        rng = np.random.default_rng(10)
        flows, masks = self._random_sequence(rng)
        with pytest.raises(ValueError):
            complete_flow_recurrent(flows, masks[:-1], recurrent_weights)


def test_weights_roundtrip(tmp_path, recurrent_weights):
    from flowpaint import weights_io

    path = tmp_path / "w.ntc"
    weights_io.save_weights(path, recurrent_weights.to_tensors())
    loaded = FlowCompletionWeights.from_tensors(weights_io.load_weights(path))
    # float32 storage quantizes; structure and values must round-trip closely
    for (w1, b1), (w2, b2) in zip(recurrent_weights.encoder, loaded.encoder):
        assert w1.shape == w2.shape
        assert np.abs(w1 - w2).max() <= 1e-6
