"""Per-frame feature and initialization sources.

The synthetic provider stands in for a dense body-surface encoder and a
single-image pose estimator: features are a fixed random projection of the
ground-truth joints, and initializations are ground truth plus noise. The
precomputed provider reads the same arrays back from a container file, so
exports from real models can be plugged in later.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body_model import PARAM_DIM, BodyParams, WeakPerspCam
from .container import (
    CorruptSectionError,
    ShapeMismatchError,
    read_container,
    write_container,
)
from .dataio import DATA_VERSION, MotionSequence

FEATURE_CHANNELS = 16
MIN_CAM_SCALE = 0.01


@dataclass
class FrameFeature:
    grid: np.ndarray   # [G, G, 16]
    frame_index: int


@dataclass
class InitEstimate:
    theta_init: BodyParams
    omega_init: WeakPerspCam


@dataclass
class OcclusionMask:
    frames: np.ndarray              # [N] bool, True = occluded
    cells: np.ndarray | None = None  # [N, G, G] bool

    @classmethod
    def none(cls, n):
        return cls(np.zeros(n, dtype=bool))


class SurrogateEncoder:
    """Seeded linear map from 24 joint positions (metres) onto a G x G x 16 grid."""

    def __init__(self, grid=8, encoder_seed=0):
        self.grid = grid
        rng = np.random.default_rng(encoder_seed)
        self.proj = rng.normal(0.0, 1.0 / np.sqrt(72.0), size=(72, grid * grid * FEATURE_CHANNELS))

    def __call__(self, joints_mm):
        j = np.asarray(joints_mm, dtype=np.float64) / 1000.0
        flat = j.reshape(j.shape[:-2] + (72,)) @ self.proj
        return flat.reshape(j.shape[:-2] + (self.grid, self.grid, FEATURE_CHANNELS))


def synth_features(seq: MotionSequence, seed=0, noise_sigma=0.1, mask=None, grid=8,
                   encoder=None) -> np.ndarray:
    """Feature grids ``[N, G, G, 16]`` (float32) for every frame of ``seq``.

    The projection is a property of the encoder (fixed across calls);
    ``seed`` only drives the additive noise.
    """
    encoder = encoder or SurrogateEncoder(grid)
    feats = encoder(seq.joints)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        feats = feats + rng.normal(0.0, noise_sigma, size=feats.shape)
    if mask is not None:
        if len(mask.frames) != len(seq):
            raise ValueError("mask length must equal sequence length")
        feats[np.asarray(mask.frames, dtype=bool)] = 0.0
        if mask.cells is not None:
            feats[np.asarray(mask.cells, dtype=bool)] = 0.0
    return feats.astype(np.float32)


def synth_init(seq: MotionSequence, seed=0, pose_noise_sigma=0.05, cam_noise_sigma=0.02):
    """Noisy per-frame ``(params [N, 85], cams [N, 3])`` initializations (float32).

    Noise is added independently to every component in canonical units.
    """
    rng = np.random.default_rng(seed)
    gt = seq.params.astype(np.float64)
    params = gt + rng.normal(0.0, pose_noise_sigma, size=gt.shape) if pose_noise_sigma > 0 else gt.copy()
    cams = seq.cams.astype(np.float64)
    if cam_noise_sigma > 0:
        cams = cams + rng.normal(0.0, cam_noise_sigma, size=cams.shape)
    cams[:, 0] = np.maximum(cams[:, 0], MIN_CAM_SCALE)
    return params.astype(np.float32), cams.astype(np.float32)


def init_estimates(params, cams):
    """Per-frame :class:`InitEstimate` records from packed arrays."""
    return [InitEstimate(BodyParams.unpack(p.astype(np.float64)), WeakPerspCam(*map(float, c)))
            for p, c in zip(params, cams)]


class SyntheticProvider:
    """Caches synthetic features and initializations per sequence."""

    def __init__(self, grid=8, feature_sigma=0.1, pose_sigma=0.05, cam_sigma=0.02,
                 seed=0, encoder_seed=0):
        self.grid = grid
        self.feature_sigma = feature_sigma
        self.pose_sigma = pose_sigma
        self.cam_sigma = cam_sigma
        self.seed = seed
        self.encoder = SurrogateEncoder(grid, encoder_seed)
        self._cache = {}

    def _seq_seed(self, seq, salt):
        return np.random.SeedSequence([self.seed, seq.seed, salt]).generate_state(1)[0]

    def get(self, seq: MotionSequence):
        """``(features [N,G,G,16], init_params [N,85], init_cams [N,3])``."""
        if seq.seq_id not in self._cache:
            feats = synth_features(seq, self._seq_seed(seq, 1), self.feature_sigma,
                                   grid=self.grid, encoder=self.encoder)
            params, cams = synth_init(seq, self._seq_seed(seq, 2), self.pose_sigma, self.cam_sigma)
            self._cache[seq.seq_id] = (feats, params, cams)
        return self._cache[seq.seq_id]


class PrecomputedProvider:
    def __init__(self, features, inits, init_cams):
        self.features = features
        self.inits = inits
        self.init_cams = init_cams
        self.grid = next(iter(features.values())).shape[1] if features else 0

    @classmethod
    def from_file(cls, path):
        return cls(*load_precomputed(path, with_cams=True))

    def get(self, seq: MotionSequence):
        sid = seq.seq_id
        if sid not in self.features:
            raise KeyError(f"no precomputed inputs for sequence {sid!r}")
        return self.features[sid], self.inits[sid], self.init_cams[sid]


def save_precomputed(path, features, inits, init_cams, grid):
    sections = {}
    records = []
    for sid in features:
        sections[f"prov/{sid}/features"] = features[sid]
        sections[f"prov/{sid}/inits"] = inits[sid]
        sections[f"prov/{sid}/init_cams"] = init_cams[sid]
        records.append({"seq_id": sid, "length": int(len(features[sid]))})
    write_container(path, DATA_VERSION, sections, {"grid": int(grid), "providers": records})


def load_precomputed(path, with_cams=False):
    """Return ``(features, inits)`` dicts keyed by sequence id (plus cameras if asked)."""
    try:
        meta, sections = read_container(path, DATA_VERSION)
    except CorruptSectionError as exc:
        raise ShapeMismatchError(f"{path}: payload does not match header shapes") from exc
    G = int(meta.get("grid", 0))
    features, inits, cams = {}, {}, {}
    for rec in meta.get("providers", []):
        sid, N = rec["seq_id"], rec["length"]
        try:
            f = sections[f"prov/{sid}/features"]
            p = sections[f"prov/{sid}/inits"]
            c = sections[f"prov/{sid}/init_cams"]
        except KeyError as exc:
            raise ShapeMismatchError(f"sequence {sid!r}: missing section {exc}") from exc
        if f.shape != (N, G, G, FEATURE_CHANNELS):
            raise ShapeMismatchError(f"{sid}: features {f.shape}, header says {(N, G, G, 16)}")
        if p.shape != (N, PARAM_DIM) or c.shape != (N, 3):
            raise ShapeMismatchError(f"{sid}: inits {p.shape} / cams {c.shape} for {N} frames")
        features[sid], inits[sid], cams[sid] = f, p, c
    if with_cams:
        return features, inits, cams
    return features, inits
