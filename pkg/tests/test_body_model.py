import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stamotion.body_model import (
    NUM_JOINTS,
    SMPL_PARENTS,
    BodyModelT,
    BodyParams,
    DegenerateInputError,
    SkeletonTemplate,
    WeakPerspCam,
    aa_to_rotmat,
    aa_to_rotmat_t,
    default_template,
    forward_kinematics,
    pack_params,
    pack_pose_144,
    project_joints,
    project_weak,
    rotmat_to_6d,
    rotmat_to_aa,
    sixd_to_rotmat,
    skin_vertices,
    unpack_pose_144,
)
from stamotion.numerics import autodiff as ad
from stamotion.numerics.layers import ContractError

aa_vec = arrays(np.float64, 3, elements=st.floats(-3, 3, allow_nan=False))


def quat_rotmat(aa):
    """Rotation matrix through a unit quaternion, independent of Rodrigues."""
    angle = np.linalg.norm(aa)
    if angle == 0:
        return np.eye(3)
    axis = aa / angle
    w = np.cos(angle / 2)
    x, y, z = axis * np.sin(angle / 2)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_params(rng, scale=0.4):
    return BodyParams(rng.normal(0, 100, 3), rng.normal(0, scale, 3),
                      rng.normal(0, scale, (23, 3)), rng.normal(0, 0.5, 10))


@pytest.fixture(scope="module")
def tmpl():
    return default_template()


class TestRotations:
    def test_identity_and_quarter_turn(self):
        np.testing.assert_array_equal(aa_to_rotmat(np.zeros(3)), np.eye(3))
        R = aa_to_rotmat([np.pi / 2, 0, 0])
        np.testing.assert_allclose(R, [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)

    def test_quaternion_oracle(self):
        rng = np.random.default_rng(0)
        for aa in rng.normal(0, 1.5, size=(200, 3)):
            np.testing.assert_allclose(aa_to_rotmat(aa), quat_rotmat(aa), atol=1e-10)

    def test_small_angle_branch(self):
        aa = np.array([3e-9, -1e-9, 2e-9])
        R = aa_to_rotmat(aa)
        np.testing.assert_allclose(R, quat_rotmat(aa), atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(aa_vec)
    def test_orthonormal_det_one(self, aa):
        R = aa_to_rotmat(aa)
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1) < 1e-9

    def test_6d_examples(self):
        np.testing.assert_array_equal(rotmat_to_6d(np.eye(3)), [1, 0, 0, 0, 1, 0])
        np.testing.assert_allclose(sixd_to_rotmat([2, 0, 0, 0, 3, 0]), np.eye(3))

    def test_6d_round_trip(self):
        rng = np.random.default_rng(1)
        R = aa_to_rotmat(rng.normal(0, 1.5, size=(100, 3)))
        assert np.abs(sixd_to_rotmat(rotmat_to_6d(R)) - R).max() < 1e-9

    @pytest.mark.parametrize("v", [[0, 0, 0, 0, 1, 0], [1, 0, 0, 2, 0, 0], [1, 2, 3, 0, 0, 0]])
    def test_6d_degenerate(self, v):
        with pytest.raises(DegenerateInputError):
            sixd_to_rotmat(v)

    def test_aa_round_trip(self):
        rng = np.random.default_rng(2)
        aa = rng.normal(0, 1.0, size=(500, 3))
        aa = aa[np.linalg.norm(aa, axis=1) < np.pi - 1e-3]
        assert np.abs(rotmat_to_aa(aa_to_rotmat(aa)) - aa).max() < 1e-9

    def test_tensor_rodrigues_matches(self):
        rng = np.random.default_rng(3)
        aa = rng.normal(size=(20, 3))
        np.testing.assert_allclose(aa_to_rotmat_t(ad.Tensor(aa)).data, aa_to_rotmat(aa), atol=1e-10)


class TestPose144:
    def test_zero_pose(self):
        v = pack_pose_144(np.zeros(3), np.zeros((23, 3)))
        assert v.shape == (144,)
        np.testing.assert_array_equal(v, np.tile([1, 0, 0, 0, 1, 0], 24))

    def test_root_only(self):
        R = np.array([np.pi / 2, 0, 0])
        v = pack_pose_144(R, np.zeros((23, 3)))
        np.testing.assert_allclose(v[:6], rotmat_to_6d(aa_to_rotmat(R)), atol=1e-15)
        np.testing.assert_allclose(v[:6], [1, 0, 0, 0, 0, 1], atol=1e-15)
        np.testing.assert_array_equal(v[6:], np.tile([1, 0, 0, 0, 1, 0], 23))

    def test_unpack_is_inverse(self):
        rng = np.random.default_rng(4)
        R, theta = rng.normal(0, 0.5, 3), rng.normal(0, 0.5, (23, 3))
        R2, th2 = unpack_pose_144(pack_pose_144(R, theta))
        np.testing.assert_allclose(R2, R, atol=1e-10)
        np.testing.assert_allclose(th2, theta, atol=1e-10)


class TestBodyParams:
    def test_pack_layout(self):
        p = BodyParams(np.arange(3.0), np.arange(3.0) + 3, np.arange(69.0).reshape(23, 3) + 6,
                       np.arange(10.0) + 75)
        np.testing.assert_array_equal(p.pack(), np.arange(85.0))
        q = BodyParams.unpack(p.pack())
        np.testing.assert_array_equal(q.theta, p.theta)

    def test_validate(self):
        p = BodyParams.zeros()
        p.validate()
        p.beta[3] = 6.0
        with pytest.raises(ContractError):
            p.validate()
        with pytest.raises(ContractError):
            BodyParams.unpack(np.zeros(84))

    def test_camera_scale_positive(self):
        with pytest.raises(ContractError):
            WeakPerspCam(0.0, 0, 0)


def chain_oracle(p, tmpl, k):
    """Walk the root-to-k chain and multiply matrices explicitly."""
    chain = []
    j = k
    while j != -1:
        chain.append(j)
        j = tmpl.parent[j]
    chain = chain[::-1]
    off = tmpl.shaped_offsets(p.beta)
    rots = [aa_to_rotmat(p.R)] + [aa_to_rotmat(t) for t in p.theta]
    pos = np.array(p.T, dtype=float)
    G = np.eye(3)
    for a, b in zip(chain[:-1], chain[1:]):
        G = G @ rots[a]
        pos = pos + G @ off[b]
    return pos


class TestKinematics:
    def test_rest_pose_is_cumulative_offsets(self, tmpl):
        J = forward_kinematics(BodyParams.zeros(), tmpl)
        for k in range(1, NUM_JOINTS):
            np.testing.assert_allclose(J[k], J[tmpl.parent[k]] + tmpl.rest_offsets[k])

    def test_translation(self, tmpl):
        p = BodyParams.zeros()
        p.T = np.array([10.0, 0, 0])
        np.testing.assert_allclose(forward_kinematics(p, tmpl),
                                   forward_kinematics(BodyParams.zeros(), tmpl) + [10, 0, 0])

    def test_single_bent_joint_against_chain_oracle(self, tmpl):
        p = BodyParams.zeros()
        p.theta[4] = [0.3, -0.7, 0.2]     # left knee
        J = forward_kinematics(p, tmpl)
        for k in range(NUM_JOINTS):
            np.testing.assert_allclose(J[k], chain_oracle(p, tmpl, k), atol=1e-9)

    def test_random_pose_against_chain_oracle(self, tmpl):
        p = random_params(np.random.default_rng(5))
        J = forward_kinematics(p, tmpl)
        for k in range(NUM_JOINTS):
            np.testing.assert_allclose(J[k], chain_oracle(p, tmpl, k), atol=1e-9)

    def test_rigid_equivariance(self, tmpl):
        rng = np.random.default_rng(6)
        p = random_params(rng)
        dR = aa_to_rotmat(rng.normal(size=3))
        q = BodyParams(dR @ p.T, rotmat_to_aa(dR @ aa_to_rotmat(p.R)), p.theta, p.beta)
        np.testing.assert_allclose(forward_kinematics(q, tmpl), forward_kinematics(p, tmpl) @ dR.T,
                                   atol=1e-8)

    def test_batched_matches_single(self, tmpl):
        rng = np.random.default_rng(7)
        ps = [random_params(rng) for _ in range(4)]
        batch = BodyParams.unpack(np.stack([p.pack() for p in ps]))
        J = forward_kinematics(batch, tmpl)
        for i, p in enumerate(ps):
            np.testing.assert_allclose(J[i], forward_kinematics(p, tmpl), atol=1e-10)

    def test_tensor_fk_matches_numpy(self, tmpl):
        rng = np.random.default_rng(8)
        vec = np.stack([random_params(rng).pack() for _ in range(3)])
        J = BodyModelT(tmpl, np.float64).joints(ad.Tensor(vec)).data
        np.testing.assert_allclose(J, forward_kinematics(BodyParams.unpack(vec), tmpl), atol=1e-8)

    def test_template_rejects_bad_tree(self, tmpl):
        parent = SMPL_PARENTS.copy()
        parent[3] = 5
        with pytest.raises(ContractError):
            SkeletonTemplate(parent, tmpl.rest_offsets, tmpl.shape_basis, tmpl.vertex_template,
                             tmpl.vertex_joint)


class TestSkinning:
    def test_rest_pose(self, tmpl):
        V = skin_vertices(BodyParams.zeros(), tmpl)
        J = forward_kinematics(BodyParams.zeros(), tmpl)
        np.testing.assert_allclose(V, J[tmpl.vertex_joint] + tmpl.vertex_template)

    def test_global_rotation_is_rigid(self, tmpl):
        rng = np.random.default_rng(9)
        p = random_params(rng)
        p.T = np.zeros(3)
        dR = aa_to_rotmat([0.0, 0.0, 0.9])
        q = BodyParams(p.T, rotmat_to_aa(dR @ aa_to_rotmat(p.R)), p.theta, p.beta)
        np.testing.assert_allclose(skin_vertices(q, tmpl), skin_vertices(p, tmpl) @ dR.T, atol=1e-8)

    def test_per_vertex_oracle(self, tmpl):
        p = random_params(np.random.default_rng(10))
        V = skin_vertices(p, tmpl)
        rots = [aa_to_rotmat(p.R)] + [aa_to_rotmat(t) for t in p.theta]
        J = forward_kinematics(p, tmpl)
        for v in range(0, tmpl.num_vertices, 7):
            k = tmpl.vertex_joint[v]
            chain = []
            j = k
            while j != -1:
                chain.append(j)
                j = tmpl.parent[j]
            G = np.eye(3)
            for j in chain[::-1]:
                G = G @ rots[j]
            np.testing.assert_allclose(V[v], J[k] + G @ tmpl.vertex_template[v], atol=1e-9)


class TestProjection:
    def test_examples(self):
        np.testing.assert_allclose(project_weak(WeakPerspCam(1, 0, 0), [[3, 4, 7]]), [[3, 4]])
        np.testing.assert_allclose(project_weak(WeakPerspCam(2, 0.1, -0.3), [[1, 1, 5]]), [[2.1, 1.7]])

    @given(arrays(np.float64, (5, 3), elements=st.floats(-100, 100)),
           st.floats(0.1, 5), st.floats(-1, 1), st.floats(-1, 1))
    def test_batch_is_pointwise_and_ignores_depth(self, pts, s, tx, ty):
        cam = WeakPerspCam(s, tx, ty)
        out = project_weak(cam, pts)
        for i in range(5):
            np.testing.assert_allclose(out[i], project_weak(cam, pts[i:i + 1])[0])
        moved = pts.copy()
        moved[:, 2] += 17.0
        np.testing.assert_array_equal(project_weak(cam, moved), out)

    def test_joint_projection_is_per_metre(self):
        np.testing.assert_allclose(project_joints(np.array([2.0, 0, 0]), [[1000.0, 500.0, 9.0]]),
                                   [[2.0, 1.0]])


def test_pack_params_shapes():
    v = pack_params(np.zeros((4, 3)), np.zeros((4, 3)), np.zeros((4, 23, 3)), np.zeros((4, 10)))
    assert v.shape == (4, 85)
