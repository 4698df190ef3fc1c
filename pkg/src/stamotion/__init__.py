"""Temporal refinement of per-frame 3D human body estimates.

Submodules: ``body_model`` (kinematics and rotations), ``providers`` (per-frame
inputs), ``sta`` (spatio-temporal aggregation), ``regressor`` (coarse head,
LSTM refinement, windowed inference), ``losses``, ``metrics``, ``dataio`` and
``cli``.
"""

__version__ = "0.1.0"
