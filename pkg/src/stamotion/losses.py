"""Training objective on the refined per-frame parameters.

Each component is a per-frame quantity; :func:`loss_final` takes the
weighted sum and averages it over every frame in the batch. The Tensor
functions accept batched inputs ``[M, ...]``; the numpy counterparts with
the same names minus ``_t`` handle single frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body_model import aa_to_rotmat, aa_to_rotmat_t, project_joints, project_joints_t
from .config import LossWeights
from .numerics import autodiff as ad


@dataclass
class LossComponents:
    smpl: object
    j3d: object
    j2d: object


# -- numpy reference forms ------------------------------------------------------

def loss_smpl(pred_vec, gt_vec, w: LossWeights = LossWeights()):
    pred_vec, gt_vec = np.asarray(pred_vec, float), np.asarray(gt_vec, float)
    shape = np.linalg.norm(pred_vec[..., 75:85] - gt_vec[..., 75:85], axis=-1)
    if w.pose_mode == "axis_angle":
        pose = np.linalg.norm(pred_vec[..., 3:75] - gt_vec[..., 3:75], axis=-1)
    else:
        lead = pred_vec.shape[:-1]
        Rp = aa_to_rotmat(pred_vec[..., 3:75].reshape(lead + (24, 3)))
        Rg = aa_to_rotmat(gt_vec[..., 3:75].reshape(lead + (24, 3)))
        pose = np.sqrt(((Rp - Rg) ** 2).sum(axis=(-1, -2, -3)))
    return w.lambda_shape * shape + w.lambda_pose * pose


def loss_3d(pred_joints, gt_joints):
    return np.linalg.norm(np.asarray(pred_joints) - np.asarray(gt_joints), axis=-1).mean(axis=-1)


def loss_2d(gt_2d, pred_joints, cam):
    return np.linalg.norm(np.asarray(gt_2d) - project_joints(cam, pred_joints), axis=-1).mean(axis=-1)


def loss_final(components, w: LossWeights = LossWeights()):
    """Weighted sum of ``(smpl, 3d, 2d)`` averaged over frames."""
    smpl, j3d, j2d = (np.asarray(c, float) for c in components)
    return float(np.mean(w.lambda1 * smpl + w.lambda2 * j3d + w.lambda3 * j2d))


# -- differentiable forms -------------------------------------------------------

def loss_smpl_t(pred, gt, w: LossWeights):
    """``pred`` Tensor ``[M, 85]``, ``gt`` array ``[M, 85]`` -> per-frame Tensor ``[M]``."""
    gt = ad.Tensor(np.asarray(gt, dtype=pred.dtype))
    shape = ad.safe_norm(pred[:, 75:85] - gt[:, 75:85], axis=-1)
    if w.pose_mode == "axis_angle":
        pose = ad.safe_norm(pred[:, 3:75] - gt[:, 3:75], axis=-1)
    else:
        M = pred.shape[0]
        Rp = aa_to_rotmat_t(pred[:, 3:75].reshape(M * 24, 3))
        Rg = aa_to_rotmat(gt.data[:, 3:75].reshape(M * 24, 3)).astype(pred.dtype)
        diff = (Rp - Rg).reshape(M, 24 * 9)
        pose = ad.safe_norm(diff, axis=-1)
    return shape * w.lambda_shape + pose * w.lambda_pose


def loss_3d_t(pred_joints, gt_joints):
    gt = np.asarray(gt_joints, dtype=pred_joints.dtype)
    return ad.safe_norm(pred_joints - gt, axis=-1).mean(axis=-1)


def loss_2d_t(gt_2d, pred_joints, omega):
    gt = np.asarray(gt_2d, dtype=pred_joints.dtype)
    return ad.safe_norm(project_joints_t(omega, pred_joints) - gt, axis=-1).mean(axis=-1)


def loss_final_t(comps: LossComponents, w: LossWeights):
    total = comps.smpl * w.lambda1 + comps.j3d * w.lambda2 + comps.j2d * w.lambda3
    return total.mean()


def window_objective(pred, omega, gt_params, gt_joints, gt_2d, body, w: LossWeights):
    """End-to-end loss on ``pred [B, W, 85]``; returns ``(L_final, components)``."""
    B, W = pred.shape[:2]
    M = B * W
    flat = pred.reshape(M, 85)
    joints = body.joints(flat)
    comps = LossComponents(
        loss_smpl_t(flat, np.asarray(gt_params).reshape(M, 85), w),
        loss_3d_t(joints, np.asarray(gt_joints).reshape(M, 24, 3)),
        loss_2d_t(np.asarray(gt_2d).reshape(M, 24, 2), joints, omega.reshape(M, 3)),
    )
    return loss_final_t(comps, w), comps
