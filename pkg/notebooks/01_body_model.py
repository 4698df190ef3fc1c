"""
Rotations and the skeleton
==========================

Walk through the rotation helpers and forward kinematics of the 24-joint
skeleton. Everything here is plain numpy; units are millimetres.
"""

import numpy as np

from stamotion.body_model import (
    BodyParams,
    WeakPerspCam,
    aa_to_rotmat,
    default_template,
    forward_kinematics,
    pack_pose_144,
    project_joints,
    rotmat_to_6d,
    sixd_to_rotmat,
    skin_vertices,
)

# A quarter turn about x sends y to z.
R = aa_to_rotmat([np.pi / 2, 0, 0])
print(np.round(R, 12))

# The 6D form keeps the first two columns; Gram-Schmidt brings it back.
six = rotmat_to_6d(R)
print("6d:", np.round(six, 12))
print("back:", np.allclose(sixd_to_rotmat(six), R))

# Unnormalised columns are fine as long as they are not parallel.
print(sixd_to_rotmat([2, 0, 0, 0, 3, 0]))

tmpl = default_template()
rest = forward_kinematics(BodyParams.zeros(), tmpl)
print("rest pose joints (mm), first five:\n", np.round(rest[:5], 1))

# Bend the left knee (joint 4) and see which joints move.
p = BodyParams.zeros()
p.theta[3] = [0.8, 0.0, 0.0]
bent = forward_kinematics(p, tmpl)
moved = np.nonzero(np.linalg.norm(bent - rest, axis=1) > 1e-9)[0]
print("joints moved by the knee:", moved)

# The network sees the pose as 24 stacked 6D blocks.
print("pose vector length:", pack_pose_144(p.R, p.theta).shape)

# Surface points ride rigidly on their joints.
V = skin_vertices(p, tmpl)
print("surface points:", V.shape)

# Weak perspective: scale is per metre, so joints are converted from mm.
cam = WeakPerspCam(1.1, 0.05, -0.1)
print("2D keypoints, first three:\n", np.round(project_joints(cam, bent)[:3], 4))
