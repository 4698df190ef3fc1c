"""Simplified SMPL-style body: rotations, kinematics, skinning and camera.

Lengths are millimetres. The 85-vector layout is ``[T(3) | R(3) | theta(69) | beta(10)]``.
Plain-numpy functions are used for data generation and metrics; the
``*_t`` variants build differentiable graphs for training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .numerics import autodiff as ad
from .numerics.layers import ContractError

NUM_JOINTS = 24
NUM_BETAS = 10
PARAM_DIM = 85
CAM_DIM = 3

# SMPL kinematic tree (parent of each joint, -1 for the pelvis).
SMPL_PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21],
    dtype=np.int64,
)

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)

# Parent-relative rest offsets in mm, close to an average adult SMPL template.
_REST_OFFSETS_MM = np.array([
    [0.0, 0.0, 0.0],
    [58.0, -82.0, -18.0],
    [-60.0, -91.0, -14.0],
    [4.0, 109.0, -22.0],
    [43.0, -386.0, 8.0],
    [-43.0, -383.0, -5.0],
    [5.0, 136.0, 1.0],
    [-15.0, -427.0, -37.0],
    [19.0, -420.0, -35.0],
    [-2.0, 53.0, 25.0],
    [41.0, -60.0, 122.0],
    [-35.0, -62.0, 130.0],
    [-13.0, 214.0, -33.0],
    [72.0, 119.0, -19.0],
    [-83.0, 119.0, -15.0],
    [10.0, 89.0, 50.0],
    [123.0, 45.0, -19.0],
    [-113.0, 47.0, -8.0],
    [255.0, -16.0, -23.0],
    [-260.0, -14.0, -31.0],
    [266.0, 9.0, -7.0],
    [-269.0, 7.0, -6.0],
    [87.0, -11.0, -16.0],
    [-89.0, -9.0, -10.0],
])


class DegenerateInputError(ValueError):
    pass


@dataclass
class BodyParams:
    T: np.ndarray
    R: np.ndarray
    theta: np.ndarray
    beta: np.ndarray

    def pack(self) -> np.ndarray:
        return pack_params(self.T, self.R, self.theta, self.beta)

    @classmethod
    def unpack(cls, vec) -> "BodyParams":
        vec = np.asarray(vec)
        if vec.shape[-1] != PARAM_DIM:
            raise ContractError(f"expected {PARAM_DIM}-vector, got {vec.shape}")
        return cls(vec[..., 0:3], vec[..., 3:6],
                   vec[..., 6:75].reshape(vec.shape[:-1] + (23, 3)), vec[..., 75:85])

    @classmethod
    def zeros(cls):
        return cls(np.zeros(3), np.zeros(3), np.zeros((23, 3)), np.zeros(NUM_BETAS))

    def validate(self, max_beta=5.0):
        vec = self.pack()
        if not np.all(np.isfinite(vec)):
            raise ContractError("non-finite body parameters")
        if np.any(np.abs(self.beta) > max_beta):
            raise ContractError(f"shape coefficients exceed |beta| <= {max_beta}")
        return self


def pack_params(T, R, theta, beta):
    T, R, theta, beta = (np.asarray(a, dtype=np.float64) for a in (T, R, theta, beta))
    lead = T.shape[:-1]
    return np.concatenate([T, R, theta.reshape(lead + (69,)), beta], axis=-1)


@dataclass
class WeakPerspCam:
    """Weak-perspective camera ``omega = (s, tx, ty)``; ``s`` is image units per metre."""

    s: float
    tx: float
    ty: float

    def __post_init__(self):
        if not self.s > 0:
            raise ContractError("camera scale must be positive")

    @property
    def omega(self):
        return np.array([self.s, self.tx, self.ty])


@dataclass
class SkeletonTemplate:
    parent: np.ndarray
    rest_offsets: np.ndarray
    shape_basis: np.ndarray
    vertex_template: np.ndarray
    vertex_joint: np.ndarray

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        if self.parent[0] != -1 or np.any(self.parent[1:] >= np.arange(1, len(self.parent))):
            raise ContractError("parents must form a tree rooted at joint 0 in topological order")
        if np.any(self.rest_offsets[0] != 0):
            raise ContractError("root rest offset must be zero")

    @property
    def num_vertices(self):
        return len(self.vertex_template)

    def shaped_offsets(self, beta):
        """Parent-relative offsets after applying the linear shape basis."""
        return self.rest_offsets + np.einsum("jck,...k->...jc", self.shape_basis, beta)

    def rest_joints(self, beta=None):
        off = self.rest_offsets if beta is None else self.shaped_offsets(beta)
        joints = np.zeros_like(off)
        for k in range(1, NUM_JOINTS):
            joints[..., k, :] = joints[..., self.parent[k], :] + off[..., k, :]
        return joints


def default_template(num_vertices=128, seed=1234) -> SkeletonTemplate:
    """Fixed anthropometric skeleton with a seeded shape basis and surface points."""
    rng = np.random.default_rng(seed)
    rest = _REST_OFFSETS_MM.copy()
    basis = np.zeros((NUM_JOINTS, 3, NUM_BETAS))
    # first coefficient scales stature, the rest perturb bones by a few mm each
    basis[:, :, 0] = 0.06 * rest
    basis[:, :, 1:] = rng.normal(0.0, 4.0, size=(NUM_JOINTS, 3, NUM_BETAS - 1))
    basis[0] = 0.0
    vertex_joint = np.arange(num_vertices) % NUM_JOINTS
    directions = rng.normal(size=(num_vertices, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.uniform(40.0, 90.0, size=(num_vertices, 1))
    return SkeletonTemplate(SMPL_PARENTS.copy(), rest, basis, directions * radii, vertex_joint)


# -- rotations ---------------------------------------------------------------

def aa_to_rotmat(aa) -> np.ndarray:
    """Rodrigues formula for ``(..., 3)`` axis-angle arrays."""
    aa = np.asarray(aa, dtype=np.float64)
    angle = np.linalg.norm(aa, axis=-1, keepdims=True)
    small = angle < 1e-8
    safe = np.where(small, 1.0, angle)
    k = aa / safe
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    zero = np.zeros_like(kx)
    K = np.stack([zero, -kz, ky, kz, zero, -kx, -ky, kx, zero], axis=-1).reshape(aa.shape[:-1] + (3, 3))
    s = np.sin(angle)[..., None]
    c = (1.0 - np.cos(angle))[..., None]
    eye = np.eye(3)
    R = eye + s * K + c * (K @ K)
    # first-order expansion near zero: I + [aa]x
    ax, ay, az = aa[..., 0], aa[..., 1], aa[..., 2]
    lin = eye + np.stack([zero, -az, ay, az, zero, -ax, -ay, ax, zero],
                         axis=-1).reshape(aa.shape[:-1] + (3, 3))
    return np.where(small[..., None], lin, R)


def rotmat_to_aa(Rm) -> np.ndarray:
    Rm = np.asarray(Rm, dtype=np.float64)
    flat = Rm.reshape(-1, 3, 3)
    out = Rotation.from_matrix(flat).as_rotvec()
    return out.reshape(Rm.shape[:-2] + (3,))


def rotmat_to_6d(Rm) -> np.ndarray:
    """First two columns, concatenated column-wise."""
    Rm = np.asarray(Rm)
    return np.concatenate([Rm[..., :, 0], Rm[..., :, 1]], axis=-1)


def sixd_to_rotmat(v, eps=1e-12) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    a1, a2 = v[..., :3], v[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 < eps):
        raise DegenerateInputError("first 6D half has zero length")
    b1 = a1 / n1
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(n2 < eps * np.maximum(1.0, np.linalg.norm(a2, axis=-1, keepdims=True))):
        raise DegenerateInputError("6D halves are collinear or zero")
    b2 = u2 / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def pack_pose_144(R, theta) -> np.ndarray:
    """Root rotation then 23 joint rotations, each as a 6D vector."""
    R = np.asarray(R, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    lead = R.shape[:-1]
    rots = np.concatenate([R[..., None, :], theta.reshape(lead + (23, 3))], axis=-2)
    return rotmat_to_6d(aa_to_rotmat(rots)).reshape(lead + (144,))


def unpack_pose_144(v):
    """Inverse of :func:`pack_pose_144`: returns ``(R, theta)`` in axis-angle."""
    v = np.asarray(v, dtype=np.float64)
    lead = v.shape[:-1]
    aa = rotmat_to_aa(sixd_to_rotmat(v.reshape(lead + (24, 6))))
    return aa[..., 0, :], aa[..., 1:, :]


# -- kinematics --------------------------------------------------------------

def _global_transforms(p: BodyParams, tmpl: SkeletonTemplate):
    rots = np.concatenate([np.asarray(p.R)[..., None, :], np.asarray(p.theta)], axis=-2)
    local = aa_to_rotmat(rots)
    off = tmpl.shaped_offsets(np.asarray(p.beta, dtype=np.float64))
    G = np.empty_like(local)
    J = np.empty(local.shape[:-1])
    G[..., 0, :, :] = local[..., 0, :, :]
    J[..., 0, :] = p.T
    for k in range(1, NUM_JOINTS):
        par = tmpl.parent[k]
        G[..., k, :, :] = G[..., par, :, :] @ local[..., k, :, :]
        J[..., k, :] = J[..., par, :] + np.einsum("...ij,...j->...i", G[..., par, :, :], off[..., k, :])
    return G, J


def forward_kinematics(p: BodyParams, tmpl: SkeletonTemplate) -> np.ndarray:
    """Joint positions ``(..., 24, 3)`` in mm; root sits at ``T``."""
    return _global_transforms(p, tmpl)[1]


def skin_vertices(p: BodyParams, tmpl: SkeletonTemplate) -> np.ndarray:
    G, J = _global_transforms(p, tmpl)
    Gv = G[..., tmpl.vertex_joint, :, :]
    return J[..., tmpl.vertex_joint, :] + np.einsum("...vij,vj->...vi", Gv, tmpl.vertex_template)


def project_weak(cam, points) -> np.ndarray:
    """``(u, v) = (s*x + tx, s*y + ty)``; z is dropped."""
    omega = cam.omega if isinstance(cam, WeakPerspCam) else np.asarray(cam, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    s = omega[..., None, 0:1]
    t = omega[..., None, 1:3]
    return s * points[..., :2] + t


MM_PER_M = 1000.0


def project_joints(cam, joints_mm) -> np.ndarray:
    """Project millimetre joints; the camera scale is per metre."""
    return project_weak(cam, np.asarray(joints_mm, dtype=np.float64) / MM_PER_M)


# -- differentiable counterparts ----------------------------------------------

def aa_to_rotmat_t(aa, eps=1e-12):
    """Rodrigues on a ``[M, 3]`` Tensor; ``eps`` keeps the angle's gradient finite at zero."""
    angle = ad.sqrt(ad.tsum(aa * aa, axis=-1, keepdims=True) + eps)
    k = aa / angle
    s = ad.sin(angle)[:, 0]
    c = ad.cos(angle)[:, 0]
    C = 1.0 - c
    kx, ky, kz = k[:, 0], k[:, 1], k[:, 2]
    entries = [
        c + kx * kx * C, kx * ky * C - kz * s, kx * kz * C + ky * s,
        ky * kx * C + kz * s, c + ky * ky * C, ky * kz * C - kx * s,
        kz * kx * C - ky * s, kz * ky * C + kx * s, c + kz * kz * C,
    ]
    return ad.stack(entries, axis=-1).reshape(-1, 3, 3)


class BodyModelT:
    """Differentiable forward kinematics over packed 85-vectors."""

    def __init__(self, tmpl: SkeletonTemplate, dtype=np.float32):
        self.tmpl = tmpl
        self.dtype = dtype
        self.rest = ad.Tensor(tmpl.rest_offsets.astype(dtype))
        self.basis = ad.Tensor(tmpl.shape_basis.reshape(NUM_JOINTS * 3, NUM_BETAS).T.astype(dtype))

    def joints(self, params):
        """``params`` Tensor ``[M, 85]`` -> joints Tensor ``[M, 24, 3]``."""
        M = params.shape[0]
        T = params[:, 0:3]
        rots = params[:, 3:75].reshape(M * NUM_JOINTS, 3)
        local = aa_to_rotmat_t(rots).reshape(M, NUM_JOINTS, 3, 3)
        beta = params[:, 75:85]
        off = (beta @ self.basis).reshape(M, NUM_JOINTS, 3) + self.rest
        G = [local[:, 0]]
        J = [T]
        for k in range(1, NUM_JOINTS):
            par = int(self.tmpl.parent[k])
            Gp = G[par]
            J.append(J[par] + ad.matmul(Gp, off[:, k].reshape(M, 3, 1)).reshape(M, 3))
            G.append(ad.matmul(Gp, local[:, k]))
        return ad.stack(J, axis=1)


def project_joints_t(omega, joints_mm):
    """Differentiable :func:`project_joints` for ``omega[M, 3]`` and ``joints[M, K, 3]``."""
    M = omega.shape[0]
    s = omega[:, 0:1].reshape(M, 1, 1)
    t = omega[:, 1:3].reshape(M, 1, 2)
    return s * (joints_mm[:, :, 0:2] * (1.0 / MM_PER_M)) + t
