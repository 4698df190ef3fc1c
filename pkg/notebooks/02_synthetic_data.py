"""
Synthetic motion and the input providers
========================================

Sequences are sums of slow sinusoids on every joint angle, a spline root
path and a fixed camera. Providers turn them into per-frame feature grids
and noisy initial estimates.
"""

import numpy as np

from stamotion.body_model import BodyParams, default_template, forward_kinematics
from stamotion.dataio import MotionConfig, generate_synthetic, sample_windows
from stamotion.metrics import acc_err, mpjpe
from stamotion.providers import SyntheticProvider

tmpl = default_template()
seqs = generate_synthetic(seed=0, n_seqs=3, N=96, tmpl=tmpl)
s = seqs[0]
print(s.seq_id, s.params.shape, s.joints.shape, s.keypoints.shape)

# Angle accelerations stay below the analytic bound of the sinusoids.
acc = np.abs(np.diff(s.params[:, 3:75].astype(float), n=2, axis=0))
print("max angle acceleration / bound:", float((acc / s.angle_bound).max()))

# max_angle = 0 gives a body standing still.
still = generate_synthetic(1, 1, 32, MotionConfig(max_angle=0.0), tmpl)[0]
print("static acc_err:", acc_err(still.joints, still.joints))

prov = SyntheticProvider(pose_sigma=0.05)
feats, init, cams = prov.get(s)
print("features:", feats.shape, "init:", init.shape)

# The initial estimates are ground truth plus white noise, so they jitter.
J_init = forward_kinematics(BodyParams.unpack(init.astype(float)), tmpl)
print(f"init MPJPE {mpjpe(J_init, s.joints):.1f} mm, ACC-ERR {acc_err(J_init, s.joints):.1f}")

# Training uses disjoint windows; inference uses overlapping tail-aligned ones.
print("train windows:", [(w.start, w.stop) for w in sample_windows(96, 16)])
print("infer windows:", [(w.start, w.stop) for w in sample_windows(96, 16, "infer", 14)])
