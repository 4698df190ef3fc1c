"""Pose, shape and smoothness metrics (millimetres, unit frame spacing)."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    pass


class AlignmentError(MetricError):
    pass


@dataclass
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return pred, gt


def mpjpe(pred, gt):
    pred, gt = _check_pair(pred, gt)
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


mpvpe = mpjpe


def procrustes_align(pred, gt, tol=1e-9):
    """Least-squares similarity taking ``pred`` onto ``gt`` (reflections excluded)."""
    pred, gt = _check_pair(pred, gt)
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    P, G = pred - mu_p, gt - mu_g
    var_p = (P ** 2).sum()
    sv = np.linalg.svd(P, compute_uv=False)
    if var_p <= tol or len(sv) < 2 or sv[1] <= tol * max(sv[0], 1.0):
        raise AlignmentError("degenerate point set: coincident or collinear points")
    U, S, Vt = np.linalg.svd(G.T @ P)
    D = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        D[2, 2] = -1.0
    R = U @ D @ Vt
    s = float(np.trace(np.diag(S) @ D) / var_p)
    t = mu_g - s * R @ mu_p
    return SimilarityTransform(s, R, t)


def pa_mpjpe(pred, gt):
    """Per-frame Procrustes alignment followed by MPJPE; accepts ``[K, 3]`` or ``[N, K, 3]``."""
    pred, gt = _check_pair(pred, gt)
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    aligned = np.stack([procrustes_align(p, g).apply(p) for p, g in zip(pred, gt)])
    return mpjpe(aligned, gt)


def acceleration(joints):
    """Second differences ``J[t+1] - 2 J[t] + J[t-1]`` for interior frames."""
    joints = np.asarray(joints, dtype=np.float64)
    if len(joints) < 3:
        raise MetricError("acceleration needs at least 3 frames")
    return joints[2:] - 2.0 * joints[1:-1] + joints[:-2]


def acc_err(pred, gt):
    pred, gt = _check_pair(pred, gt)
    return float(np.linalg.norm(acceleration(pred) - acceleration(gt), axis=-1).mean())


def accel_curve(pred, gt):
    """Rows ``(t, mean |a_gt|, mean |a_pred|)`` for interior frames ``t = 1..N-2``."""
    pred, gt = _check_pair(pred, gt)
    a_gt = np.linalg.norm(acceleration(gt), axis=-1).mean(axis=-1)
    a_pr = np.linalg.norm(acceleration(pred), axis=-1).mean(axis=-1)
    t = np.arange(1, len(gt) - 1)
    return np.column_stack([t, a_gt, a_pr])


def accel_magnitudes(joints):
    return np.linalg.norm(acceleration(joints), axis=-1).mean(axis=-1)


METRIC_COLUMNS = ("mpjpe", "pa_mpjpe", "mpvpe", "acc_err")


def sequence_metrics(pred_joints, gt_joints, pred_verts, gt_verts):
    return {
        "mpjpe": mpjpe(pred_joints, gt_joints),
        "pa_mpjpe": pa_mpjpe(pred_joints, gt_joints),
        "mpvpe": mpvpe(pred_verts, gt_verts),
        "acc_err": acc_err(pred_joints, gt_joints),
    }


def aggregate(rows):
    return {k: float(np.mean([r[k] for r in rows])) for k in METRIC_COLUMNS}


def write_metrics_csv(path, rows, include_mean=True):
    """``rows``: list of dicts with ``seq_id`` and the metric columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seq_id", *METRIC_COLUMNS])
        for r in rows:
            w.writerow([r["seq_id"], *(repr(float(r[k])) for k in METRIC_COLUMNS)])
        if include_mean and rows:
            agg = aggregate(rows)
            w.writerow(["mean", *(repr(agg[k]) for k in METRIC_COLUMNS)])


def write_curve_csv(path, t, columns):
    """``columns``: ordered name -> per-frame values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *columns])
        for i, ti in enumerate(t):
            w.writerow([int(ti), *(repr(float(v[i])) for v in columns.values())])
