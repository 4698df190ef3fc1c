import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stamotion.body_model import BodyModelT, default_template, project_joints
from stamotion.config import LossWeights
from stamotion.losses import (
    LossComponents,
    loss_2d,
    loss_2d_t,
    loss_3d,
    loss_3d_t,
    loss_final,
    loss_final_t,
    loss_smpl,
    loss_smpl_t,
    window_objective,
)
from stamotion.numerics import autodiff as ad
from stamotion.numerics import grad_check
from stamotion.numerics.layers import Parameter

rng0 = np.random.default_rng(0)


class TestSmpl:
    def test_zero_at_gt(self):
        v = rng0.normal(size=85)
        assert loss_smpl(v, v) == 0.0

    def test_unit_shape_difference(self):
        gt = np.zeros(85)
        pred = gt.copy()
        pred[80] = 1.0
        assert loss_smpl(pred, gt) == 1.0

    def test_translation_ignored(self):
        gt = np.zeros(85)
        pred = gt.copy()
        pred[:3] = 100.0
        assert loss_smpl(pred, gt) == 0.0

    def test_direct_norm_oracle(self):
        p, g = rng0.normal(size=(2, 85))
        w = LossWeights(lambda_shape=0.5, lambda_pose=2.0)
        expected = 0.5 * np.sqrt(((p[75:] - g[75:]) ** 2).sum()) + 2.0 * np.sqrt(((p[3:75] - g[3:75]) ** 2).sum())
        assert loss_smpl(p, g, w) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("mode", ["axis_angle", "rotmat"])
    def test_tensor_matches_numpy(self, mode):
        w = LossWeights(pose_mode=mode)
        p, g = rng0.normal(0, 0.5, size=(2, 4, 85))
        np.testing.assert_allclose(loss_smpl_t(ad.Tensor(p), g, w).data, loss_smpl(p, g, w), atol=1e-9)


class TestJointLosses:
    def test_3d_examples(self):
        J = rng0.normal(size=(24, 3))
        assert loss_3d(J, J) == 0.0
        assert loss_3d(J + [3, 4, 0], J) == pytest.approx(5.0, abs=1e-12)
        K = J.copy()
        K[7, 0] += 5.0
        assert loss_3d(K, J) == pytest.approx(5 / 24, abs=1e-12)

    def test_2d_examples(self):
        J = rng0.normal(0, 500, size=(24, 3))
        cam = np.array([1.1, 0.05, -0.02])
        x = project_joints(cam, J)
        assert loss_2d(x, J, cam) == 0.0
        assert loss_2d(x + [0, 1], J, cam) == pytest.approx(1.0, abs=1e-12)

    def test_2d_oracle(self):
        J = rng0.normal(0, 500, size=(24, 3))
        x = rng0.normal(size=(24, 2))
        cam = np.array([0.9, 0.1, 0.2])
        proj = cam[0] * J[:, :2] / 1000.0 + cam[1:]
        expected = np.mean([np.hypot(*(x[k] - proj[k])) for k in range(24)])
        assert loss_2d(x, J, cam) == pytest.approx(expected, rel=1e-12)

    def test_tensor_forms(self):
        P, G = rng0.normal(0, 100, size=(2, 3, 24, 3))
        np.testing.assert_allclose(loss_3d_t(ad.Tensor(P), G).data, loss_3d(P, G), atol=1e-10)
        om = np.column_stack([np.ones(3), np.zeros((3, 2))])
        x = rng0.normal(size=(3, 24, 2))
        got = loss_2d_t(x, ad.Tensor(P), ad.Tensor(om)).data
        np.testing.assert_allclose(got, [loss_2d(x[i], P[i], om[i]) for i in range(3)], atol=1e-12)


class TestFinal:
    def test_default_weights(self):
        assert loss_final((1.0, 1.0, 1.0)) == pytest.approx(360.06, abs=1e-9)

    def test_zeros(self):
        assert loss_final((0.0, 0.0, 0.0)) == 0.0
        zero = LossWeights(0.0, 0.0, 0.0)
        assert loss_final((3.0, 5.0, 7.0), zero) == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
    def test_linear_in_each_component(self, a, b, c, d):
        lhs = loss_final((a + d, b, c)) - loss_final((a, b, c))
        assert lhs == pytest.approx(300.0 * d, rel=1e-9, abs=1e-6)

    def test_averaged_over_frames(self):
        assert loss_final(([1.0, 3.0], [0.0, 0.0], [0.0, 0.0])) == pytest.approx(600.0)
        comps = LossComponents(ad.Tensor(np.array([1.0, 3.0])), ad.Tensor(np.zeros(2)), ad.Tensor(np.zeros(2)))
        assert float(loss_final_t(comps, LossWeights()).data) == pytest.approx(600.0)


def test_window_objective_grad_check():
    tmpl = default_template()
    body = BodyModelT(tmpl, np.float64)
    rng = np.random.default_rng(3)
    gt = rng.normal(0, 0.3, size=(1, 2, 85))
    gt[..., :3] *= 300
    pred = Parameter(gt + rng.normal(0, 0.1, gt.shape))
    omega = Parameter(np.column_stack([np.ones(2), np.zeros((2, 2))])[None] + 0.05)
    gj = body.joints(ad.Tensor(gt.reshape(2, 85))).data.reshape(1, 2, 24, 3)
    gk = project_joints(np.array([1.0, 0, 0]), gj)

    def loss():
        return window_objective(pred, omega, gt, gj, gk, body, LossWeights())[0]

    assert float(loss().data) > 0
    report = grad_check(loss, [("pred", pred), ("omega", omega)], max_entries=40)
    assert report.max_relative_error < 1e-3
