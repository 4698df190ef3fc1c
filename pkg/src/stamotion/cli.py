"""Command-line entry point: ``stamotion <command> [options]``.

Commands: ``gen-data``, ``train``, ``infer``, ``eval``, ``accel-curve``.
Configuration comes from ``--preset`` (desk or paper), then an optional JSON
``--config`` file, then ``--set section.key=value`` overrides in order.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .body_model import default_template
from .config import PRESETS, ConfigError, RunConfig, apply_overrides
from .container import ContainerError
from .dataio import DatasetFile, MotionConfig, WindowError, generate_synthetic, load_dataset, save_dataset
from .metrics import MetricError, write_curve_csv, write_metrics_csv
from .numerics.checkpoint import load_checkpoint, save_checkpoint
from .numerics.layers import ContractError
from .numerics.optim import OptimizerError
from .providers import PrecomputedProvider, SyntheticProvider
from .regressor import MotionModel, write_inference_csv
from .training import (
    DataError,
    NumericalError,
    accel_curve_columns,
    evaluate,
    evaluate_inits,
    predict_sequence,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERICAL = 5

THREADS_ENV = "STAMOTION_THREADS"

log = logging.getLogger("stamotion")


def _threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def resolve_config(args) -> RunConfig:
    if args.preset not in PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}")
    cfg = PRESETS[args.preset]()
    if args.config:
        try:
            with open(args.config) as fh:
                overlay = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from exc
        merged = _deep_merge(cfg.to_dict(), overlay)
        try:
            cfg = RunConfig.from_dict(merged)
        except TypeError as exc:
            raise ConfigError(f"unknown config key: {exc}") from exc
    try:
        return apply_overrides(cfg, args.set)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _deep_merge(base, overlay):
    out = dict(base)
    for k, v in overlay.items():
        if k not in out:
            raise ConfigError(f"unknown config key {k!r}")
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out[k], dict) else v
    return out


def provider_for(data: DatasetFile, cfg: RunConfig):
    """Stored inputs win; otherwise synthesize them from the provider settings."""
    if data.providers:
        return PrecomputedProvider(
            {k: v["features"] for k, v in data.providers.items()},
            {k: v["inits"] for k, v in data.providers.items()},
            {k: v["init_cams"] for k, v in data.providers.items()},
        )
    p = cfg.provider
    return SyntheticProvider(cfg.model.grid, p.feature_sigma, p.pose_sigma, p.cam_sigma, p.seed)


def model_from_checkpoint(path):
    meta, state = load_checkpoint(path)
    if "config" not in meta:
        raise ConfigError(f"{path}: checkpoint carries no run configuration")
    cfg = RunConfig.from_dict(meta["config"])
    model = MotionModel(cfg.model, seed=cfg.seed)
    model.load_state_dict(state)
    return cfg, model


def _select(data, seq_ids):
    if not seq_ids:
        return data.sequences
    by_id = {s.seq_id: s for s in data.sequences}
    missing = [s for s in seq_ids if s not in by_id]
    if missing:
        raise DataError(f"unknown seq_id {', '.join(missing)}")
    return [by_id[s] for s in seq_ids]


# -- commands ---------------------------------------------------------------------

def cmd_gen_data(args):
    cfg = resolve_config(args)
    motion = MotionConfig(max_angle=args.max_angle).validate()
    seqs = generate_synthetic(args.seed, args.num_seqs, args.length, motion)
    data = DatasetFile(seqs, default_template(), cfg.model.grid)
    if args.with_inputs:
        prov = provider_for(data, cfg)
        for s in seqs:
            f, p, c = prov.get(s)
            data.providers[s.seq_id] = {"features": f, "inits": p, "init_cams": c}
    save_dataset(args.out, data)
    log.info("wrote %d sequences of %d frames to %s", len(seqs), args.length, args.out)


def cmd_train(args):
    cfg = resolve_config(args)
    data = load_dataset(args.data)
    result = train(cfg, data, provider_for(data, cfg), max_steps=args.max_steps, log_path=args.log)
    meta = {"config": cfg.to_dict(), "best_epoch": result.best_epoch,
            "steps": len(result.log), "val_mpjpe": result.val_history}
    save_checkpoint(args.out, result.model, meta)
    log.info("checkpoint written to %s", args.out)


def cmd_infer(args):
    cfg, model = model_from_checkpoint(args.checkpoint)
    data = load_dataset(args.data)
    prov = provider_for(data, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for seq in _select(data, args.seq_id):
        theta, omega = predict_sequence(model, seq, prov, cfg)
        write_inference_csv(out_dir / f"{seq.seq_id}.csv", theta, omega)
    log.info("inference CSVs written to %s", out_dir)


def cmd_eval(args):
    data = load_dataset(args.data)
    seqs = _select(data, args.seq_id)
    if args.init:
        cfg = resolve_config(args)
        rows, agg = evaluate_inits(seqs, provider_for(data, cfg), data.template)
    else:
        cfg, model = model_from_checkpoint(args.checkpoint)
        rows, agg = evaluate(model, seqs, provider_for(data, cfg), cfg, data.template,
                             workers=_threads())
    write_metrics_csv(args.out, rows)
    log.info("mean %s", " ".join(f"{k}={v:.3f}" for k, v in agg.items()))


def cmd_accel_curve(args):
    cfg, model = model_from_checkpoint(args.checkpoint)
    data = load_dataset(args.data)
    (seq,) = _select(data, [args.seq_id])
    t, cols = accel_curve_columns(model, seq, provider_for(data, cfg), cfg, data.template)
    write_curve_csv(args.out, t, cols)


# -- parser -------------------------------------------------------------------------

def _config_args(p):
    p.add_argument("--preset", default="desk", help="base configuration (desk or paper)")
    p.add_argument("--config", help="JSON file overlaid on the preset")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override, e.g. optim.lr=1e-4 or model.flags.no_lstm=true")


def build_parser():
    ap = argparse.ArgumentParser(prog="stamotion", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    _config_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-seqs", type=int, default=32)
    p.add_argument("--length", type=int, default=64)
    p.add_argument("--max-angle", type=float, default=0.8)
    p.add_argument("--with-inputs", action="store_true",
                   help="also store features and initial estimates")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train and write a checkpoint")
    _config_args(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-step loss CSV")
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="per-frame parameters for each sequence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seq-id", action="append")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="per-sequence and mean metrics")
    _config_args(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seq-id", action="append")
    p.add_argument("--init", action="store_true", help="score the initial estimates instead")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("accel-curve", help="per-frame acceleration magnitudes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--seq-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_accel_curve)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "command", None) == "eval" and not args.init and not args.checkpoint:
        print("error: eval needs --checkpoint or --init", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, OptimizerError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ContainerError, DataError, WindowError, MetricError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
