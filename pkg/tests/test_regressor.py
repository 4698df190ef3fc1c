import numpy as np
import pytest

from stamotion.config import AblationFlags, ModelConfig
from stamotion.numerics import autodiff as ad
from stamotion.numerics.layers import ContractError, lstm_cell_step
from stamotion.regressor import (
    PARAM_SCALE,
    CoarseHead,
    MotionModel,
    Refiner,
    WindowScheduler,
    average_windows,
    coarse_predict,
    infer_sequence,
    refine_residual,
    to_scaled,
    write_inference_csv,
)
from stamotion.sta import WindowInputs

F = 12


def tiny_cfg(**kw):
    base = dict(feature_dim=16, uplift_dim=8, attn_dim=8, lstm_hidden=8, lstm_layers=2,
                head_hidden=16)
    base.update(kw)
    return ModelConfig(**base).validate()


def randomize(module, rng, scale=0.3):
    for p in module.parameters():
        p.data = rng.normal(0, scale, p.data.shape)


def seq_inputs(rng, N, G=8):
    feats = rng.normal(size=(N, G, G, 16))
    params = rng.normal(0, 0.2, size=(N, 85))
    params[:, :3] *= 500
    cams = np.column_stack([rng.uniform(0.8, 1.2, N), rng.normal(0, 0.1, (N, 2))])
    return feats, params, cams


@pytest.fixture
def head():
    h = CoarseHead(F, 10, 3, np.random.default_rng(0), np.float64)
    randomize(h, np.random.default_rng(1))
    return h


class TestCoarseHead:
    def test_untrained_head_returns_mean(self):
        h = CoarseHead(F, 10, 3, np.random.default_rng(0), np.float64)
        Z = ad.Tensor(np.random.default_rng(2).normal(size=(2, 5, F)))
        theta, omega = coarse_predict(Z, h)
        np.testing.assert_array_equal(theta.data, np.broadcast_to(h.mean_params, (2, 5, 85)))
        np.testing.assert_array_equal(omega.data, np.broadcast_to(h.mean_cam, (2, 5, 3)))

    def test_untrained_head_returns_start(self):
        h = CoarseHead(F, 10, 3, np.random.default_rng(0), np.float64)
        rng = np.random.default_rng(3)
        start = (rng.normal(size=(1, 4, 85)), np.abs(rng.normal(size=(1, 4, 3))) + 0.5)
        theta, omega = coarse_predict(ad.Tensor(rng.normal(size=(1, 4, F))), h, start)
        np.testing.assert_allclose(theta.data, start[0] * PARAM_SCALE)
        np.testing.assert_array_equal(omega.data, start[1])

    def test_per_frame_independence(self, head):
        Z = np.random.default_rng(4).normal(size=(1, 6, F))
        a = coarse_predict(ad.Tensor(Z), head)[0].data
        Z[0, 2] += 5.0
        b = coarse_predict(ad.Tensor(Z), head)[0].data
        mask = np.arange(6) != 2
        np.testing.assert_array_equal(a[0, mask], b[0, mask])
        assert not np.array_equal(a[0, 2], b[0, 2])

    def test_unrolled_oracle(self, head):
        Z = np.random.default_rng(5).normal(size=(3, F))
        layers = head.mlp.layers

        def mlp(x):
            for i, layer in enumerate(layers):
                x = x @ layer.weight.data + layer.bias.data
                if i < len(layers) - 1:
                    x = np.tanh(x)
            return x

        theta = np.zeros((3, 85))
        omega = np.tile([1.0, 0.0, 0.0], (3, 1))
        for _ in range(3):
            d = mlp(np.concatenate([Z, theta, omega], axis=1))
            theta, omega = theta + d[:, :85], omega + d[:, 85:]
        t3, o3 = head(ad.Tensor(Z))
        np.testing.assert_allclose(t3.data, theta, atol=1e-12)
        omega[:, 0] = np.maximum(omega[:, 0], 0.01)
        np.testing.assert_allclose(o3.data, omega, atol=1e-12)
        t1, _ = head(ad.Tensor(Z), iterations=1)
        assert not np.allclose(t1.data, t3.data)

    def test_nonfinite_rejected(self, head):
        Z = np.zeros((1, 2, F))
        Z[0, 1, 0] = np.nan
        with pytest.raises(ContractError):
            head(ad.Tensor(Z))


class TestRefiner:
    def _refiner(self, zero_proj=False):
        r = Refiner(F, 6, 2, np.random.default_rng(0), np.float64)
        proj = (r.proj.weight.data.copy(), r.proj.bias.data.copy())
        randomize(r, np.random.default_rng(1))
        if zero_proj:
            r.proj.weight.data, r.proj.bias.data = proj
        return r

    def test_zero_projection_keeps_coarse(self):
        r = self._refiner(zero_proj=True)
        rng = np.random.default_rng(2)
        coarse = ad.Tensor(rng.normal(size=(2, 5, 85)))
        pred, _ = refine_residual(ad.Tensor(rng.normal(size=(2, 5, F))), coarse, r)
        np.testing.assert_array_equal(pred.data, coarse.data)

    def test_additive_identity(self):
        r = self._refiner()
        rng = np.random.default_rng(3)
        coarse = ad.Tensor(rng.normal(size=(2, 5, 85)))
        pred, res = refine_residual(ad.Tensor(rng.normal(size=(2, 5, F))), coarse, r)
        assert res.data.any()
        np.testing.assert_array_equal(pred.data, coarse.data + res.data)

    def test_single_frame_is_one_cell_step(self):
        r = self._refiner()
        rng = np.random.default_rng(4)
        Z = rng.normal(size=(1, 1, F))
        coarse = rng.normal(size=(1, 1, 85))
        _, res = refine_residual(ad.Tensor(Z), ad.Tensor(coarse), r)
        x = np.concatenate([Z[0], to_scaled(coarse[0])], axis=1)
        for wx, wh, b in zip(r.lstm.w_x, r.lstm.w_h, r.lstm.b):
            h0 = np.zeros((1, 6))
            x, _ = lstm_cell_step(x, h0, h0, wx.data, wh.data, b.data)
        expected = (x @ r.proj.weight.data + r.proj.bias.data) * PARAM_SCALE
        np.testing.assert_allclose(res.data[0], expected, atol=1e-12)

    def test_empty_window(self):
        r = self._refiner()
        with pytest.raises(ContractError):
            refine_residual(ad.Tensor(np.zeros((1, 0, F))), ad.Tensor(np.zeros((1, 0, 85))), r)

    def test_bidirectional_width(self):
        r = Refiner(F, 6, 2, np.random.default_rng(0), np.float64, bidirectional=True)
        assert r.proj.weight.shape == (12, 85)


class TestScheduler:
    def test_starts_and_coverage(self):
        sched = WindowScheduler(16, 14)
        assert sched.starts(33) == [0, 14, 17]
        cover = sched.coverage(33)
        brute = {i: [w for w, s in enumerate([0, 14, 17]) if s <= i < s + 16] for i in range(33)}
        assert cover == brute
        assert sched.starts(16) == [0]
        assert sched.starts(30) == [0, 14]

    def test_average_windows(self):
        rng = np.random.default_rng(0)
        outs = rng.normal(size=(2, 16, 4))
        avg = average_windows(outs, [0, 14], 30)
        np.testing.assert_array_equal(avg[:14], outs[0, :14])
        np.testing.assert_array_equal(avg[16:], outs[1, 2:])
        np.testing.assert_array_equal(avg[14:16], (outs[0, 14:] + outs[1, :2]) / 2)

    def test_no_overlap_is_concatenation(self):
        outs = np.random.default_rng(1).normal(size=(3, 4, 2))
        np.testing.assert_array_equal(average_windows(outs, [0, 4, 8], 12), outs.reshape(12, 2))


class TestMotionModel:
    def _model(self, **kw):
        m = MotionModel(tiny_cfg(**kw), seed=0, dtype=np.float64)
        randomize(m, np.random.default_rng(9), 0.1)
        return m

    def test_single_window_sequence(self):
        m = self._model()
        f, p, c = seq_inputs(np.random.default_rng(0), 16)
        theta, omega = infer_sequence(f, p, c, m, WindowScheduler(16, 14))
        direct, cam = m.predict(WindowInputs.from_init(f[None], p[None], c[None]))
        np.testing.assert_array_equal(theta, direct[0])
        np.testing.assert_array_equal(omega, cam[0])

    def test_boundary_frames_are_mean_of_windows(self):
        m = self._model()
        f, p, c = seq_inputs(np.random.default_rng(1), 30)
        theta, _ = infer_sequence(f, p, c, m, WindowScheduler(16, 14), batch_size=1)
        w0 = m.predict(WindowInputs.from_init(f[None, :16], p[None, :16], c[None, :16]))[0][0]
        w1 = m.predict(WindowInputs.from_init(f[None, 14:], p[None, 14:], c[None, 14:]))[0][0]
        np.testing.assert_array_equal(theta[14:16], (w0[14:] + w1[:2]) / 2)
        np.testing.assert_array_equal(theta[:14], w0[:14])
        np.testing.assert_array_equal(theta[16:], w1[2:])

    def test_stride_equal_window_concatenates(self):
        m = self._model(stride=16)
        f, p, c = seq_inputs(np.random.default_rng(2), 32)
        theta, _ = infer_sequence(f, p, c, m, WindowScheduler(16, 16), batch_size=1)
        parts = [m.predict(WindowInputs.from_init(f[None, s:s + 16], p[None, s:s + 16],
                                                  c[None, s:s + 16]))[0][0] for s in (0, 16)]
        np.testing.assert_array_equal(theta, np.concatenate(parts))

    def test_short_sequence_rejected(self):
        m = self._model()
        f, p, c = seq_inputs(np.random.default_rng(3), 10)
        with pytest.raises(ContractError):
            infer_sequence(f, p, c, m, WindowScheduler(16, 14))

    def test_additive_identity_in_pipeline(self):
        m = self._model()
        f, p, c = seq_inputs(np.random.default_rng(4), 16)
        out = m(WindowInputs.from_init(f[None], p[None], c[None]))
        np.testing.assert_array_equal(out["pred"].data, out["coarse"].data + out["residual"].data)

    def test_no_lstm_is_coarse(self):
        full = self._model()
        abl = MotionModel(tiny_cfg(flags=AblationFlags(no_lstm=True)), seed=0, dtype=np.float64)
        state = {k: v for k, v in full.state_dict().items() if not k.startswith("refiner.")}
        abl.load_state_dict(state)
        f, p, c = seq_inputs(np.random.default_rng(5), 16)
        inp = WindowInputs.from_init(f[None], p[None], c[None])
        out = abl(inp)
        assert out["residual"] is None
        np.testing.assert_array_equal(out["pred"].data, full(inp)["coarse"].data)

    def test_init_start_with_zero_head_returns_init(self):
        m = MotionModel(tiny_cfg(head_start="init"), seed=0, dtype=np.float64)
        f, p, c = seq_inputs(np.random.default_rng(6), 16)
        out = m(WindowInputs.from_init(f[None], p[None], c[None]))
        np.testing.assert_allclose(out["pred"].data[0], p, rtol=1e-14, atol=1e-12)

    def test_init_start_needs_init(self):
        m = MotionModel(tiny_cfg(head_start="init"), seed=0, dtype=np.float64)
        f, p, c = seq_inputs(np.random.default_rng(7), 16)
        inp = WindowInputs.from_init(f[None], p[None], c[None])
        inp.init_params = None
        with pytest.raises(ContractError):
            m(inp)

    def test_feature_lstm_variant(self):
        m = MotionModel(tiny_cfg(flags=AblationFlags(lstm_on_features=True)), seed=0,
                        dtype=np.float64)
        assert not hasattr(m, "refiner")
        f, p, c = seq_inputs(np.random.default_rng(8), 16)
        assert m(WindowInputs.from_init(f[None], p[None], c[None]))["pred"].shape == (1, 16, 85)

    def test_inference_csv(self, tmp_path):
        path = tmp_path / "out.csv"
        write_inference_csv(path, np.zeros((3, 85)), np.ones((3, 3)))
        rows = path.read_text().splitlines()
        assert len(rows) == 4
        assert len(rows[0].split(",")) == 1 + 85 + 3
