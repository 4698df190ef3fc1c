"""Spatio-temporal feature aggregation over a window of frames.

Per-frame inputs are lifted to fixed widths, compared frame-to-frame with
normalized self-similarity matrices (NSSM) and learned attention maps, the
maps are mixed into a single W x W matrix, and that matrix aggregates the
down-projected features. All tensors carry a leading batch axis ``[B, W, ...]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .body_model import pack_pose_144
from .config import ConfigError, ModelConfig
from .numerics import autodiff as ad
from .numerics.layers import ContractError, Linear, Module, Parameter, glorot

MAP_NAMES = ("nssm_H", "nssm_pose", "nssm_cam", "am_H", "am_cam", "am_pose")


@dataclass
class WindowInputs:
    features: np.ndarray   # [B, W, G, G, 16]
    pose144: np.ndarray    # [B, W, 144]
    omega: np.ndarray      # [B, W, 3]
    init_params: np.ndarray | None = None   # [B, W, 85], kept for the regressor's starting point

    @classmethod
    def from_init(cls, features, init_params, init_cams):
        """Build inputs from raw grids and packed 85-d initial parameters."""
        init_params = np.asarray(init_params, dtype=np.float64)
        pose = pack_pose_144(init_params[..., 3:6], init_params[..., 6:75].reshape(init_params.shape[:-1] + (23, 3)))
        return cls(np.asarray(features), pose, np.asarray(init_cams), init_params)

    def validate(self, window=None):
        B, W = self.pose144.shape[:2]
        if self.features.shape[:2] != (B, W) or self.omega.shape[:2] != (B, W):
            raise ContractError("features, pose and camera windows differ in length")
        if window is not None and W != window:
            raise ContractError(f"window of {W} frames, configured {window}")
        if self.pose144.shape[-1] != 144 or self.omega.shape[-1] != 3:
            raise ContractError("pose must be 144-d and camera 3-d")
        return self


def nssm(X, mode="cosine"):
    """Normalized self-similarity ``[B, W, W]`` of ``X [B, W, D]`` (Tensor or array).

    ``cosine``: ``(cos + 1) / 2`` with cosine against a zero vector taken as 0.
    ``minmax``: the cosine matrix rescaled to [0, 1] by its own min and max.
    """
    X = ad.as_tensor(X)
    squeeze = X.ndim == 2
    if squeeze:
        X = X.reshape(1, *X.shape)
    n = ad.safe_norm(X, axis=-1, keepdims=True)
    nonzero = n.data[..., 0] > 0
    Xn = X / ad.clip_min(n, np.finfo(X.dtype).tiny)
    cos = ad.matmul(Xn, ad.swap_last(Xn))
    cos = (cos + ad.swap_last(cos)) * 0.5
    W = X.shape[1]
    eye = np.eye(W, dtype=X.dtype)
    if mode == "cosine":
        S = ad.clip((cos + 1.0) * 0.5, 0.0, 1.0)
        diag = np.where(nonzero[:, :, None], eye, 0.5 * eye)
    elif mode == "minmax":
        B = X.shape[0]
        flat = cos.reshape(B, W * W)
        lo_idx = (np.arange(B), flat.data.argmin(axis=1))
        hi_idx = (np.arange(B), flat.data.argmax(axis=1))
        lo = flat[lo_idx].reshape(B, 1, 1)
        hi = flat[hi_idx].reshape(B, 1, 1)
        span = ad.clip_min(hi - lo, 1e-12)
        S = ad.clip((cos - lo) / span, 0.0, 1.0)
        diag = np.where(nonzero[:, :, None], eye, 0.0)
    else:
        raise ConfigError(f"unknown nssm mode {mode!r}")
    S = S * (1.0 - eye) + diag
    return S.reshape(W, W) if squeeze else S


def attention_map(X, phi_a, phi_b, scale=True):
    """Row-softmax of projected dot products, ``[B, W, W]``."""
    X = ad.as_tensor(X)
    q = phi_a(X)
    k = phi_b(X)
    logits = ad.matmul(q, ad.swap_last(k))
    if scale:
        logits = logits * (1.0 / np.sqrt(q.shape[-1]))
    return ad.softmax(logits, axis=-1)


class StaModule(Module):
    """Uplifts, similarity maps, Phi_6 fusion and residual aggregation."""

    def __init__(self, cfg: ModelConfig, rng, dtype=np.float32):
        self.cfg = cfg
        flags = cfg.flags
        F, U, A, G = cfg.feature_dim, cfg.uplift_dim, cfg.attn_dim, cfg.grid
        self.pool = 1 if G <= 8 else G // 8
        grid_in = (G // self.pool) ** 2 * 16
        if not flags.no_pose_init:
            self.gamma1 = Linear(144, U, rng, dtype)
        if not flags.no_cam_init:
            self.gamma2 = Linear(3, U, rng, dtype)
        self.gamma3 = Linear(grid_in, F, rng, dtype)
        if not flags.no_cam_init:
            self.phi1 = Linear(U, A, rng, dtype)
            self.phi2 = Linear(U, A, rng, dtype)
        if not flags.no_body_aware_features:
            self.phi3 = Linear(F, A, rng, dtype)
            self.phi4 = Linear(F, A, rng, dtype)
        if flags.am_on_pose:
            self.phi8 = Linear(U, A, rng, dtype)
            self.phi9 = Linear(U, A, rng, dtype)
        self.phi5 = Linear(F, A, rng, dtype)
        n_maps = len(self.active_maps())
        self.phi6_w = Parameter(glorot(rng, n_maps, 1, dtype)[:, 0])
        self.phi6_b = Parameter(np.zeros(1, dtype=dtype))
        self.phi7 = Linear(A, F, rng, dtype)

    def active_maps(self):
        f = self.cfg.flags
        names = []
        if not f.no_body_aware_features:
            names.append("nssm_H")
        if not f.no_pose_init:
            names.append("nssm_pose")
        if not f.no_cam_init:
            names.append("nssm_cam")
        if not f.no_body_aware_features:
            names.append("am_H")
        if not f.no_cam_init:
            names.append("am_cam")
        if f.am_on_pose:
            names.append("am_pose")
        if not names:
            raise ConfigError("all similarity maps are ablated")
        return names

    # -- stages ----------------------------------------------------------------
    def grid_vector(self, features):
        feats = np.asarray(features)
        B, W, G = feats.shape[:3]
        if self.pool > 1:
            p = self.pool
            feats = feats.reshape(B, W, G // p, p, G // p, p, 16).mean(axis=(3, 5))
        return feats.reshape(B, W, -1)

    def embed(self, inputs: WindowInputs):
        """Per-frame uplifts; returns a dict of ``f_pose``, ``f_cam``, ``f_H`` Tensors."""
        dt = self.gamma3.weight.data.dtype
        out = {"f_H": self.gamma3(ad.Tensor(self.grid_vector(inputs.features).astype(dt)))}
        if hasattr(self, "gamma1"):
            out["f_pose"] = self.gamma1(ad.Tensor(np.asarray(inputs.pose144, dtype=dt)))
        if hasattr(self, "gamma2"):
            out["f_cam"] = self.gamma2(ad.Tensor(np.asarray(inputs.omega, dtype=dt)))
        return out

    def similarity_stack(self, emb):
        """Ordered dict of active W x W maps."""
        mode, scale = self.cfg.nssm_mode, self.cfg.attn_scale
        maps = {}
        for name in self.active_maps():
            if name == "nssm_H":
                maps[name] = nssm(emb["f_H"], mode)
            elif name == "nssm_pose":
                maps[name] = nssm(emb["f_pose"], mode)
            elif name == "nssm_cam":
                maps[name] = nssm(emb["f_cam"], mode)
            elif name == "am_H":
                maps[name] = attention_map(emb["f_H"], self.phi3, self.phi4, scale)
            elif name == "am_cam":
                maps[name] = attention_map(emb["f_cam"], self.phi1, self.phi2, scale)
            elif name == "am_pose":
                maps[name] = attention_map(emb["f_pose"], self.phi8, self.phi9, scale)
        return maps

    def fuse(self, maps):
        stacked = ad.stack(list(maps.values()), axis=-1)          # [B, W, W, k]
        fused = ad.matmul(stacked, self.phi6_w) + self.phi6_b[0]   # 1x1 conv to one channel
        if self.cfg.fused_softmax:
            fused = ad.softmax(fused, axis=-1)
        return fused

    def aggregate(self, fused, f_H):
        Y = self.phi7(ad.matmul(fused, self.phi5(f_H)))
        return Y, f_H + Y

    def __call__(self, inputs: WindowInputs):
        emb = self.embed(inputs)
        maps = self.similarity_stack(emb)
        fused = self.fuse(maps)
        Y, Z = self.aggregate(fused, emb["f_H"])
        return {"emb": emb, "maps": maps, "fused": fused, "Y": Y, "Z": Z}


def fuse_and_aggregate(maps, f_H, phi5, phi6_w, phi6_b, phi7, fused_softmax=False):
    """Functional form of the fusion step for explicit weights (arrays or Tensors).

    ``maps``: sequence of ``[W, W]`` (or batched) maps; ``phi5``/``phi7``:
    ``(weight, bias)`` pairs; ``phi6_w``: one weight per map; ``phi6_b``: scalar.
    Returns ``(Y, Z, fused)``.
    """
    if len(maps) == 0:
        raise ConfigError("all similarity maps are ablated")
    if len(phi6_w) != len(maps):
        raise ContractError("one fusion weight per active map is required")
    stacked = ad.stack([ad.as_tensor(m) for m in maps], axis=-1)
    fused = ad.matmul(stacked, ad.as_tensor(phi6_w)) + ad.as_tensor(np.asarray(phi6_b, dtype=stacked.dtype))
    if fused_softmax:
        fused = ad.softmax(fused, axis=-1)
    f_H = ad.as_tensor(f_H)
    down = ad.affine(f_H, ad.as_tensor(phi5[0]), ad.as_tensor(phi5[1]))
    Y = ad.affine(ad.matmul(fused, down), ad.as_tensor(phi7[0]), ad.as_tensor(phi7[1]))
    return Y, f_H + Y, fused


def dump_similarity_csv(path, maps, fused, window_index=0):
    """Write one row per (i, j) cell of a window's maps for inspection."""
    names = list(maps)
    arrays = [np.asarray(maps[n].data if hasattr(maps[n], "data") else maps[n])[window_index] for n in names]
    fz = np.asarray(fused.data if hasattr(fused, "data") else fused)[window_index]
    W = fz.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", *names, "fused"])
        for i in range(W):
            for j in range(W):
                w.writerow([i, j, *(f"{a[i, j]:.9g}" for a in arrays), f"{fz[i, j]:.9g}"])
