"""Synthetic motion sequences, dataset persistence and window sampling."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .body_model import (
    PARAM_DIM,
    BodyParams,
    SkeletonTemplate,
    default_template,
    forward_kinematics,
    project_joints,
)
from .config import ConfigError
from .container import CorruptSectionError, read_container, write_container

DATA_VERSION = "sta-motion-data/1"


class WindowError(ValueError):
    pass


@dataclass
class MotionConfig:
    max_angle: float = 0.8
    min_period: float = 16.0
    max_period: float = 64.0
    max_components: int = 3
    beta_sigma: float = 1.0
    beta_clip: float = 2.0
    translation_sigma: float = 150.0
    translation_knot_spacing: int = 32
    scale_range: tuple = (0.8, 1.2)
    offset_range: float = 0.2

    def validate(self):
        if self.min_period < 2 or self.max_period < self.min_period:
            raise ConfigError("sinusoid periods must satisfy 2 <= min_period <= max_period")
        if self.max_angle < 0:
            raise ConfigError("max_angle must be non-negative")
        if not 1 <= self.max_components <= 3:
            raise ConfigError("max_components must be 1, 2 or 3")
        return self


@dataclass
class MotionSequence:
    """Ground truth for one clip; arrays are float32, one row per frame."""

    seq_id: str
    params: np.ndarray      # [N, 85]
    joints: np.ndarray      # [N, 24, 3] mm
    keypoints: np.ndarray   # [N, 24, 2]
    cams: np.ndarray        # [N, 3]
    seed: int = 0
    config: dict = field(default_factory=dict)
    angle_bound: np.ndarray | None = None   # [72] analytic second-difference bound

    def __len__(self):
        return len(self.params)

    def body_params(self, i=None) -> BodyParams:
        vec = self.params if i is None else self.params[i]
        return BodyParams.unpack(vec.astype(np.float64))


def derive_ground_truth(params32, cams32, tmpl):
    """Joints and keypoints recomputed from stored float32 parameters."""
    p = BodyParams.unpack(params32.astype(np.float64))
    joints = forward_kinematics(p, tmpl).astype(np.float32)
    kp = project_joints(cams32.astype(np.float64), joints.astype(np.float64)).astype(np.float32)
    return joints, kp


def _sinusoid_angles(rng, N, cfg):
    t = np.arange(N, dtype=np.float64)
    angles = np.zeros((N, 72))
    bound = np.zeros(72)
    for c in range(72):
        k = rng.integers(1, cfg.max_components + 1)
        amps = rng.uniform(0.0, cfg.max_angle / k, size=k)
        periods = rng.uniform(cfg.min_period, cfg.max_period, size=k)
        phases = rng.uniform(0.0, 2 * np.pi, size=k)
        w = 2 * np.pi / periods
        angles[:, c] = (amps[None, :] * np.sin(w[None, :] * t[:, None] + phases)).sum(axis=1)
        bound[c] = np.sum(4.0 * amps * np.sin(w / 2.0) ** 2)
    return angles, bound


def generate_sequence(seed, N, cfg=None, tmpl=None, seq_id=None) -> MotionSequence:
    cfg = (cfg or MotionConfig()).validate()
    tmpl = tmpl or default_template()
    rng = np.random.default_rng(seed)
    angles, bound = _sinusoid_angles(rng, N, cfg)
    beta = np.clip(rng.normal(0.0, cfg.beta_sigma, size=10), -cfg.beta_clip, cfg.beta_clip)
    knots = np.arange(0, N + cfg.translation_knot_spacing, cfg.translation_knot_spacing)
    spline = CubicSpline(knots, rng.normal(0.0, cfg.translation_sigma, size=(len(knots), 3)))
    T = spline(np.arange(N, dtype=np.float64))
    lo, hi = cfg.scale_range
    cam = np.array([rng.uniform(lo, hi), *rng.uniform(-cfg.offset_range, cfg.offset_range, 2)])

    params = np.concatenate([T, angles, np.repeat(beta[None], N, axis=0)], axis=1).astype(np.float32)
    cams = np.repeat(cam[None], N, axis=0).astype(np.float32)
    joints, kp = derive_ground_truth(params, cams, tmpl)
    return MotionSequence(seq_id or f"seq{seed:06d}", params, joints, kp, cams, int(seed),
                          asdict(cfg), bound)


def generate_synthetic(seed, n_seqs, N, motion_config=None, tmpl=None, window=16):
    """``n_seqs`` independent clips; clip ``i`` uses its own child seed."""
    if N < window:
        raise ConfigError(f"sequence length {N} shorter than window {window}")
    cfg = (motion_config or MotionConfig()).validate()
    children = np.random.SeedSequence(seed).spawn(n_seqs)
    out = []
    for i, child in enumerate(children):
        child_seed = int(child.generate_state(1)[0])
        out.append(generate_sequence(child_seed, N, cfg, tmpl, seq_id=f"s{seed}_{i:04d}"))
    return out


# -- persistence ---------------------------------------------------------------

@dataclass
class DatasetFile:
    sequences: list
    template: SkeletonTemplate
    grid: int = 8
    providers: dict = field(default_factory=dict)   # seq_id -> {"features":..., "inits":..., "init_cams":...}


def template_sections(tmpl):
    return {
        "template/parent": tmpl.parent,
        "template/rest_offsets": tmpl.rest_offsets,
        "template/shape_basis": tmpl.shape_basis,
        "template/vertex_template": tmpl.vertex_template,
        "template/vertex_joint": tmpl.vertex_joint,
    }


def template_from_sections(sections):
    try:
        return SkeletonTemplate(
            sections["template/parent"].astype(np.int64),
            sections["template/rest_offsets"].astype(np.float64),
            sections["template/shape_basis"].astype(np.float64),
            sections["template/vertex_template"].astype(np.float64),
            sections["template/vertex_joint"].astype(np.int64),
        )
    except KeyError as exc:
        raise CorruptSectionError(f"missing template section {exc}") from exc


def save_dataset(path, data: DatasetFile):
    sections = template_sections(data.template)
    records = []
    for seq in data.sequences:
        sid = seq.seq_id
        sections[f"seq/{sid}/params"] = seq.params
        sections[f"seq/{sid}/joints"] = seq.joints
        sections[f"seq/{sid}/keypoints"] = seq.keypoints
        sections[f"seq/{sid}/cams"] = seq.cams
        if seq.angle_bound is not None:
            sections[f"seq/{sid}/angle_bound"] = seq.angle_bound
        records.append({"seq_id": sid, "length": len(seq), "seed": seq.seed, "config": seq.config})
        for key, arr in data.providers.get(sid, {}).items():
            sections[f"prov/{sid}/{key}"] = arr
    meta = {"num_sequences": len(records), "sequences": records, "grid": data.grid,
            "num_joints": 24, "num_vertices": data.template.num_vertices,
            "param_dim": PARAM_DIM}
    write_container(path, DATA_VERSION, sections, meta)


def load_dataset(path) -> DatasetFile:
    meta, sections = read_container(path, DATA_VERSION)
    tmpl = template_from_sections(sections)
    seqs = []
    providers = {}
    for rec in meta.get("sequences", []):
        sid = rec["seq_id"]
        try:
            seq = MotionSequence(
                sid, sections[f"seq/{sid}/params"], sections[f"seq/{sid}/joints"],
                sections[f"seq/{sid}/keypoints"], sections[f"seq/{sid}/cams"],
                rec.get("seed", 0), rec.get("config", {}),
                sections.get(f"seq/{sid}/angle_bound"))
        except KeyError as exc:
            raise CorruptSectionError(f"sequence {sid!r} missing section {exc}") from exc
        if len(seq.params) != rec["length"]:
            raise CorruptSectionError(f"sequence {sid!r}: length mismatch")
        seqs.append(seq)
        prefix = f"prov/{sid}/"
        prov = {k[len(prefix):]: v for k, v in sections.items() if k.startswith(prefix)}
        if prov:
            providers[sid] = prov
    return DatasetFile(seqs, tmpl, int(meta.get("grid", 8)), providers)


# -- windows --------------------------------------------------------------------

def window_starts(N, W, stride):
    """Stride-``stride`` window starts with the last window aligned to the tail."""
    if not 1 <= stride <= W:
        raise WindowError(f"stride must satisfy 1 <= stride <= W, got {stride}")
    if N < W:
        raise WindowError(f"sequence of {N} frames is shorter than window {W}")
    starts = list(range(0, N - W + 1, stride))
    if starts[-1] != N - W:
        starts.append(N - W)
    return starts


def sample_windows(seq_len, W, mode="train", stride=None):
    """Index ranges ``range(start, start + W)`` for training or inference."""
    N = seq_len if isinstance(seq_len, (int, np.integer)) else len(seq_len)
    if N < W:
        raise WindowError(f"sequence of {N} frames is shorter than window {W}")
    if mode == "train":
        starts = range(0, N - W + 1, W)
    elif mode == "infer":
        starts = window_starts(N, W, stride if stride is not None else max(1, W - 2))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return [range(s, s + W) for s in starts]
