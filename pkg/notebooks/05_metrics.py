"""
Evaluation metrics
==================

Position error with and without similarity alignment, and acceleration
error from second differences.
"""

import numpy as np

from stamotion.body_model import aa_to_rotmat
from stamotion.metrics import acc_err, accel_curve, mpjpe, pa_mpjpe, procrustes_align

rng = np.random.default_rng(0)
gt = rng.normal(0, 300, (20, 24, 3))

print("offset (3,4,0):", mpjpe(gt + [3, 4, 0], gt))

R = aa_to_rotmat([0.2, 1.0, -0.3])
moved = 2.0 * gt @ R.T + [5, 0, 0]
print(f"moved copy: MPJPE {mpjpe(moved, gt):.1f}, PA-MPJPE {pa_mpjpe(moved, gt):.2e}")
T = procrustes_align(moved[0], gt[0])
print("recovered scale:", round(T.scale, 12))

# x(t) = t^2 has second difference 2 everywhere.
para = np.zeros((10, 24, 3))
para[:, :, 0] = (np.arange(10.0) ** 2)[:, None]
print("acc_err of t^2:", acc_err(para, np.zeros_like(para)))

# Sinusoids: |a_t| = 4 A sin^2(w/2) |sin(w t + phi)|.
A, w = 20.0, 0.5
t = np.arange(30)
wave = np.zeros((30, 24, 3))
wave[:, :, 2] = (A * np.sin(w * t))[:, None]
curve = accel_curve(wave, np.zeros_like(wave))
closed = 4 * A * np.sin(w / 2) ** 2 * np.abs(np.sin(w * t[1:-1]))
print("curve matches closed form:", np.allclose(curve[:, 2], closed))
