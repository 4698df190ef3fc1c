"""End-to-end training, evaluation and curve export."""

from __future__ import annotations

import csv
import logging
import time
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .body_model import BodyModelT, BodyParams, forward_kinematics, skin_vertices
from .config import RunConfig
from .dataio import DatasetFile, MotionSequence, sample_windows
from .losses import window_objective
from .metrics import accel_magnitudes, aggregate, sequence_metrics
from .numerics.layers import ContractError
from .numerics.optim import Adam, PlateauSchedule
from .regressor import MotionModel, WindowScheduler, infer_sequence
from .sta import WindowInputs

log = logging.getLogger(__name__)


class NumericalError(FloatingPointError):
    pass


class DataError(ValueError):
    pass


LOG_COLUMNS = ("step", "epoch", "L_SMPL", "L_3D", "L_2D", "L_final", "lr")


@dataclass
class TrainResult:
    model: MotionModel
    log: list
    val_history: list = field(default_factory=list)
    lr_history: list = field(default_factory=list)
    best_epoch: int = -1


def split_sequences(seqs, val_fraction, seed):
    """Hold out ``ceil(val_fraction * n)`` sequences (at least one if n > 1)."""
    n = len(seqs)
    n_val = int(np.ceil(val_fraction * n)) if n > 1 and val_fraction > 0 else 0
    order = np.random.default_rng(seed).permutation(n)
    val = [seqs[i] for i in sorted(order[:n_val])]
    train = [seqs[i] for i in sorted(order[n_val:])]
    return train, val


def gather_windows(seqs, provider, W):
    """Stack non-overlapping training windows from every sequence."""
    feats, iparams, icams, gparams, gjoints, gkp = [], [], [], [], [], []
    for seq in seqs:
        f, p, c = provider.get(seq)
        for r in sample_windows(len(seq), W, "train"):
            sl = slice(r.start, r.stop)
            feats.append(f[sl])
            iparams.append(p[sl])
            icams.append(c[sl])
            gparams.append(seq.params[sl])
            gjoints.append(seq.joints[sl])
            gkp.append(seq.keypoints[sl])
    if not feats:
        raise DataError("no training windows")
    arrays = [np.stack(a) for a in (feats, iparams, icams, gparams, gjoints, gkp)]
    # 6D pose packing is fixed per window, so do it once
    inputs = WindowInputs.from_init(arrays[0], arrays[1], arrays[2])
    return inputs, arrays[3], arrays[4], arrays[5]


def _subset(inputs, idx):
    return WindowInputs(inputs.features[idx], inputs.pose144[idx], inputs.omega[idx],
                        inputs.init_params[idx])


def train_step(model, body, opt, inputs, gt_params, gt_joints, gt_kp, weights):
    opt.zero_grad()
    out = model(inputs)
    loss, comps = window_objective(out["pred"], out["omega"], gt_params, gt_joints, gt_kp,
                                   body, weights)
    value = float(loss.data)
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss {value}")
    loss.backward()
    opt.step()
    return value, comps


@contextmanager
def _divergence_guard(inputs):
    """Report non-finite activations from finite inputs as a numerical failure."""
    try:
        yield
    except ContractError as exc:
        if all(np.all(np.isfinite(a)) for a in (inputs.features, inputs.pose144, inputs.omega)):
            raise NumericalError(f"training diverged: {exc}") from exc
        raise


def validation_mpjpe(model, seqs, provider, sched, tmpl):
    if not seqs:
        return float("nan")
    errs = []
    for seq in seqs:
        f, p, c = provider.get(seq)
        theta, _ = infer_sequence(f, p, c, model, sched)
        joints = forward_kinematics(BodyParams.unpack(theta), tmpl)
        errs.append(np.linalg.norm(joints - seq.joints, axis=-1).mean())
    return float(np.mean(errs))


def train(cfg: RunConfig, data: DatasetFile, provider, max_steps=None, log_path=None,
          val_seqs=None):
    """Optimize the final objective; keeps the parameters of the best validation epoch."""
    cfg.validate()
    mc = cfg.model
    for seq in data.sequences:
        if len(seq) < mc.window:
            raise DataError(f"sequence {seq.seq_id} shorter than window {mc.window}")
    if val_seqs is None:
        train_seqs, val_seqs = split_sequences(data.sequences, cfg.optim.val_fraction, cfg.seed)
    else:
        train_seqs = data.sequences
    model = MotionModel(mc, seed=cfg.seed)
    body = BodyModelT(data.template, model.dtype)
    sched = WindowScheduler(mc.window, mc.stride)
    inputs, gp, gj, gk = gather_windows(train_seqs, provider, mc.window)
    n_win = len(gp)
    opt = Adam(model.named_parameters(), cfg.optim.lr)
    plateau = PlateauSchedule(cfg.optim.lr, cfg.optim.lr_decay_factor, cfg.optim.patience)
    rng = np.random.default_rng(cfg.seed + 1)
    result = TrainResult(model, [])
    best_state, best_val = None, float("inf")
    step = 0
    t0 = time.perf_counter()
    for epoch in range(cfg.optim.epochs):
        order = rng.permutation(n_win)
        for b in range(0, n_win, cfg.optim.batch_size):
            idx = np.sort(order[b:b + cfg.optim.batch_size])
            with _divergence_guard(inputs):
                value, comps = train_step(model, body, opt, _subset(inputs, idx), gp[idx],
                                          gj[idx], gk[idx], cfg.loss)
            step += 1
            result.log.append({
                "step": step, "epoch": epoch,
                "L_SMPL": float(comps.smpl.data.mean()), "L_3D": float(comps.j3d.data.mean()),
                "L_2D": float(comps.j2d.data.mean()), "L_final": value, "lr": opt.lr,
            })
            if max_steps is not None and step >= max_steps:
                break
        with _divergence_guard(inputs):
            val = validation_mpjpe(model, val_seqs, provider, sched, data.template)
        result.val_history.append(val)
        log.info("epoch %d step %d loss %.4f val_mpjpe %.2f (%.1fs)", epoch, step,
                 result.log[-1]["L_final"], val, time.perf_counter() - t0)
        if np.isfinite(val) and val < best_val:
            best_val, best_state, result.best_epoch = val, model.state_dict(), epoch
        opt.lr = plateau.update(val if np.isfinite(val) else result.log[-1]["L_final"])
        result.lr_history.append(opt.lr)
        if max_steps is not None and step >= max_steps:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    if log_path is not None:
        write_training_log(log_path, result.log)
    return result


def write_training_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in LOG_COLUMNS})


# -- evaluation -----------------------------------------------------------------

def predict_sequence(model, seq, provider, cfg: RunConfig):
    f, p, c = provider.get(seq)
    return infer_sequence(f, p, c, model, WindowScheduler(cfg.model.window, cfg.model.stride))


def evaluate_params(seq: MotionSequence, theta, tmpl):
    """Metrics of per-frame parameters ``theta [N, 85]`` against the sequence ground truth."""
    pred = BodyParams.unpack(np.asarray(theta, dtype=np.float64))
    gt = seq.body_params()
    row = sequence_metrics(forward_kinematics(pred, tmpl), seq.joints.astype(np.float64),
                           skin_vertices(pred, tmpl), skin_vertices(gt, tmpl))
    row["seq_id"] = seq.seq_id
    return row


def evaluate(model, seqs, provider, cfg, tmpl, workers=1):
    """Per-sequence metric rows plus their mean; ``workers > 1`` spreads sequences over threads."""
    def one(s):
        return evaluate_params(s, predict_sequence(model, s, provider, cfg)[0], tmpl)

    if workers > 1 and len(seqs) > 1:
        for s in seqs:          # fill the provider cache before fanning out
            provider.get(s)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, seqs))
    else:
        rows = [one(s) for s in seqs]
    return rows, aggregate(rows)


def evaluate_inits(seqs, provider, tmpl):
    rows = [evaluate_params(s, provider.get(s)[1], tmpl) for s in seqs]
    return rows, aggregate(rows)


def accel_curve_columns(model, seq, provider, cfg, tmpl):
    """Per-interior-frame acceleration magnitudes of ground truth, initialization and output."""
    init = provider.get(seq)[1]
    theta = predict_sequence(model, seq, provider, cfg)[0]
    cols = {
        "gt": accel_magnitudes(seq.joints),
        "init": accel_magnitudes(forward_kinematics(BodyParams.unpack(init.astype(np.float64)), tmpl)),
        "refined": accel_magnitudes(forward_kinematics(BodyParams.unpack(theta), tmpl)),
    }
    return np.arange(1, len(seq) - 1), cols
