"""Coarse per-frame regression, LSTM residual refinement and windowed inference."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .body_model import CAM_DIM, PARAM_DIM
from .config import ModelConfig
from .dataio import window_starts
from .numerics import autodiff as ad
from .numerics.layers import LSTM, MLP, ContractError, Linear, Module
from .providers import MIN_CAM_SCALE
from .sta import StaModule, WindowInputs

# The regressors work in a rescaled parameter space where translation is in metres.
PARAM_SCALE = np.ones(PARAM_DIM)
PARAM_SCALE[:3] = 1000.0
MEAN_CAM = np.array([1.0, 0.0, 0.0])


def to_scaled(params):
    return params * (1.0 / PARAM_SCALE).astype(params.dtype)


class CoarseHead(Module):
    """Iterative error feedback conditioned on ``[Z | theta | omega]``.

    The last layer starts at zero, so an untrained head returns its starting
    estimate (mean parameters unless told otherwise).
    """

    def __init__(self, feature_dim, hidden, iterations, rng, dtype=np.float32, activation="tanh"):
        self.iterations = iterations
        self.mlp = MLP([feature_dim + PARAM_DIM + CAM_DIM, hidden, hidden, PARAM_DIM + CAM_DIM],
                       rng, dtype, activation, zero_last=True)
        self.mean_params = np.zeros(PARAM_DIM, dtype=dtype)
        self.mean_cam = MEAN_CAM.astype(dtype)

    def __call__(self, Z, iterations=None, start=None):
        """``Z [B, W, F]`` -> ``(theta_scaled [B, W, 85], omega [B, W, 3])`` Tensors.

        ``start`` optionally replaces the mean parameters with per-frame
        ``(theta_scaled, omega)`` arrays as the first estimate.
        """
        if not np.all(np.isfinite(Z.data)):
            raise ContractError("non-finite features reach the coarse head")
        lead = Z.shape[:-1]
        dt = Z.dtype
        if start is None:
            theta0 = np.broadcast_to(self.mean_params.astype(dt), lead + (PARAM_DIM,))
            omega0 = np.broadcast_to(self.mean_cam.astype(dt), lead + (CAM_DIM,))
        else:
            theta0, omega0 = (np.asarray(a, dtype=dt) for a in start)
        theta = ad.Tensor(theta0.copy())
        omega = ad.Tensor(omega0.copy())
        for _ in range(self.iterations if iterations is None else iterations):
            delta = self.mlp(ad.concat([Z, theta, omega], axis=-1))
            theta = theta + delta[..., :PARAM_DIM]
            omega = omega + delta[..., PARAM_DIM:]
        scale = ad.clip_min(omega[..., 0:1], MIN_CAM_SCALE)
        omega = ad.concat([scale, omega[..., 1:]], axis=-1)
        return theta, omega


def coarse_predict(Z, head: CoarseHead, start=None):
    """Per-frame ``(theta_coarse [B, W, 85] canonical, omega [B, W, 3])`` Tensors."""
    theta_s, omega = head(Z, start=start)
    return to_canonical_t(theta_s), omega


class Refiner(Module):
    """Stacked LSTM over ``[Z | coarse]`` with a zero-initialized 85-d residual projection."""

    def __init__(self, feature_dim, hidden, layers, rng, dtype=np.float32, bidirectional=False):
        self.lstm = LSTM(feature_dim + PARAM_DIM, hidden, layers, rng, dtype, bidirectional)
        self.proj = Linear(self.lstm.out_dim, PARAM_DIM, rng, dtype, zero=True)

    def __call__(self, Z, theta_scaled):
        if Z.shape[1] == 0:
            raise ContractError("empty window")
        h = self.lstm(ad.concat([Z, theta_scaled], axis=-1))
        return self.proj(h)


class FeatureLSTM(Module):
    """Ablation: LSTM aggregates ``Z`` ahead of a single predictor pass."""

    def __init__(self, feature_dim, hidden, layers, rng, dtype=np.float32):
        self.lstm = LSTM(feature_dim, hidden, layers, rng, dtype)
        self.to_feature = Linear(hidden, feature_dim, rng, dtype)

    def __call__(self, Z):
        return self.to_feature(self.lstm(Z))


def refine_residual(Z, theta_coarse, refiner: Refiner):
    """``theta_pred = theta_coarse + residual`` on canonical 85-vectors (Tensors)."""
    if Z.shape[1] == 0:
        raise ContractError("empty window")
    res = to_canonical_t(refiner(Z, to_scaled_t(theta_coarse)))
    return theta_coarse + res, res


def to_canonical_t(x):
    return x * PARAM_SCALE.astype(x.dtype)


def to_scaled_t(x):
    return x * (1.0 / PARAM_SCALE).astype(x.dtype)


class MotionModel(Module):
    def __init__(self, cfg: ModelConfig, seed=0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        F = cfg.feature_dim
        self.sta = StaModule(cfg, rng, dtype)
        if cfg.flags.lstm_on_features:
            self.feature_lstm = FeatureLSTM(F, cfg.lstm_hidden, cfg.lstm_layers, rng, dtype)
        self.head = CoarseHead(F, cfg.head_hidden, cfg.head_iterations, rng, dtype, cfg.activation)
        if not cfg.flags.no_lstm and not cfg.flags.lstm_on_features:
            self.refiner = Refiner(F, cfg.lstm_hidden, cfg.lstm_layers, rng, dtype,
                                   cfg.lstm_bidirectional)

    @property
    def dtype(self):
        return self.sta.gamma3.weight.data.dtype

    def __call__(self, inputs: WindowInputs):
        """Full pipeline on a batch of windows; returns a dict of Tensors."""
        inputs.validate()
        out = self.sta(inputs)
        Z = out["Z"]
        head_in = self.feature_lstm(Z) if hasattr(self, "feature_lstm") else Z
        start = None
        if self.cfg.head_start == "init":
            if inputs.init_params is None:
                raise ContractError("head_start='init' needs the packed initial parameters")
            start = (to_scaled(np.asarray(inputs.init_params, dtype=np.float64)), inputs.omega)
        coarse, omega = coarse_predict(head_in, self.head, start)
        if hasattr(self, "refiner"):
            pred, res = refine_residual(Z, coarse, self.refiner)
        else:
            pred, res = coarse, None
        out.update(coarse=coarse, omega=omega, residual=res, pred=pred)
        return out

    def predict(self, inputs: WindowInputs):
        """Numpy ``(pred [B, W, 85], omega [B, W, 3])`` without building gradients."""
        out = self(inputs)
        return out["pred"].data, out["omega"].data


@dataclass
class WindowScheduler:
    window: int = 16
    stride: int = 14

    def starts(self, N):
        return window_starts(N, self.window, self.stride)

    def coverage(self, N):
        """frame -> list of window indices covering it."""
        cover = {i: [] for i in range(N)}
        for w, s in enumerate(self.starts(N)):
            for i in range(s, s + self.window):
                cover[i].append(w)
        return cover


def average_windows(window_outputs, starts, N):
    """Arithmetic mean of per-window rows for every frame (``[n_win, W, D]`` -> ``[N, D]``)."""
    window_outputs = np.asarray(window_outputs)
    n_win, W, D = window_outputs.shape
    total = np.zeros((N, D), dtype=np.float64)
    count = np.zeros(N, dtype=np.int64)
    for out, s in zip(window_outputs, starts):
        total[s:s + W] += out
        count[s:s + W] += 1
    if np.any(count == 0):
        raise ContractError("some frames are not covered by any window")
    return total / count[:, None]


def infer_sequence(features, init_params, init_cams, model: MotionModel, sched: WindowScheduler,
                   batch_size=64):
    """Per-frame ``(theta_pred [N, 85], omega_pred [N, 3])`` with boundary averaging."""
    N = len(init_params)
    if N < sched.window:
        raise ContractError(f"sequence of {N} frames shorter than window {sched.window}")
    starts = sched.starts(N)
    idx = np.stack([np.arange(s, s + sched.window) for s in starts])
    preds, cams = [], []
    for b in range(0, len(idx), batch_size):
        sel = idx[b:b + batch_size]
        inputs = WindowInputs.from_init(features[sel], init_params[sel], init_cams[sel])
        p, c = model.predict(inputs)
        preds.append(p)
        cams.append(c)
    preds = np.concatenate(preds)
    cams = np.concatenate(cams)
    return average_windows(preds, starts, N), average_windows(cams, starts, N)


def write_inference_csv(path, theta, omega):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", *(f"theta_{k}" for k in range(PARAM_DIM)),
                    "s", "tx", "ty"])
        for i, (t, o) in enumerate(zip(theta, omega)):
            w.writerow([i, *(f"{v:.9g}" for v in t), *(f"{v:.9g}" for v in o)])
