import csv
import json

import numpy as np
import pytest

from stamotion.cli import EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, main
from stamotion.dataio import load_dataset

TINY = ["--set", "model.window=8", "--set", "model.stride=6", "--set", "model.feature_dim=16",
        "--set", "model.uplift_dim=8", "--set", "model.attn_dim=8", "--set", "model.lstm_layers=1",
        "--set", "model.lstm_hidden=8", "--set", "model.head_hidden=16",
        "--set", "optim.epochs=1", "--set", "optim.batch_size=4"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--out", str(d / "data.bin"), "--num-seqs", "3", "--length", "20",
                 "--seed", "1"] + TINY) == EXIT_OK
    assert main(["train", "--data", str(d / "data.bin"), "--out", str(d / "m.ckpt"),
                 "--log", str(d / "log.csv")] + TINY) == EXIT_OK
    return d


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_gen_data(workspace):
    data = load_dataset(workspace / "data.bin")
    assert len(data.sequences) == 3
    assert len(data.sequences[0]) == 20


def test_gen_data_with_inputs(tmp_path):
    out = tmp_path / "d.bin"
    assert main(["gen-data", "--out", str(out), "--num-seqs", "1", "--length", "16",
                 "--with-inputs"]) == EXIT_OK
    data = load_dataset(out)
    sid = data.sequences[0].seq_id
    assert data.providers[sid]["features"].shape == (16, 8, 8, 16)


def test_infer(workspace):
    out = workspace / "pred"
    assert main(["infer", "--checkpoint", str(workspace / "m.ckpt"), "--data",
                 str(workspace / "data.bin"), "--out", str(out)]) == EXIT_OK
    files = sorted(out.iterdir())
    assert len(files) == 3
    rows = read_csv(files[0])
    assert len(rows) == 21 and len(rows[0]) == 89


def test_eval_and_init(workspace):
    assert main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data",
                 str(workspace / "data.bin"), "--out", str(workspace / "metrics.csv")]) == EXIT_OK
    rows = read_csv(workspace / "metrics.csv")
    assert rows[0] == ["seq_id", "mpjpe", "pa_mpjpe", "mpvpe", "acc_err"]
    assert rows[-1][0] == "mean"
    vals = np.array([[float(v) for v in r[1:]] for r in rows[1:-1]])
    np.testing.assert_allclose(vals.mean(axis=0), [float(v) for v in rows[-1][1:]], rtol=1e-12)
    assert main(["eval", "--init", "--data", str(workspace / "data.bin"), "--out",
                 str(workspace / "init.csv")] + TINY) == EXIT_OK


def test_eval_is_deterministic(workspace, monkeypatch):
    monkeypatch.setenv("STAMOTION_THREADS", "2")
    paths = [workspace / f"m{k}.csv" for k in range(2)]
    for p in paths:
        assert main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data",
                     str(workspace / "data.bin"), "--out", str(p)]) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_accel_curve(workspace):
    sid = load_dataset(workspace / "data.bin").sequences[0].seq_id
    out = workspace / "curve.csv"
    assert main(["accel-curve", "--checkpoint", str(workspace / "m.ckpt"), "--data",
                 str(workspace / "data.bin"), "--seq-id", sid, "--out", str(out)]) == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == ["t", "gt", "init", "refined"]
    assert len(rows) == 1 + 18


def test_unknown_seq_id(workspace):
    code = main(["accel-curve", "--checkpoint", str(workspace / "m.ckpt"), "--data",
                 str(workspace / "data.bin"), "--seq-id", "nope", "--out",
                 str(workspace / "x.csv")])
    assert code == EXIT_DATA


def test_missing_data_file(tmp_path):
    assert main(["train", "--data", str(tmp_path / "none.bin"), "--out",
                 str(tmp_path / "m.ckpt")] + TINY) == EXIT_DATA


def test_config_errors(workspace, tmp_path):
    base = ["train", "--data", str(workspace / "data.bin"), "--out", str(tmp_path / "m.ckpt")]
    assert main(base + ["--set", "model.stride=99"]) == EXIT_CONFIG
    assert main(base + ["--preset", "huge"]) == EXIT_CONFIG
    assert main(base + ["--set", "model.nonsense=1"]) == EXIT_CONFIG
    assert main(base + ["--set", "optim.lr=-1"]) == EXIT_CONFIG
    assert main(base + ["--set", "optim.val_fraction=1.5"]) == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"optim": {"momentum": 0.9}}))
    assert main(base + ["--config", str(bad)]) == EXIT_CONFIG
    assert main(["eval", "--data", str(workspace / "data.bin"), "--out", "x.csv"]) == EXIT_CONFIG


def test_config_file_overlay(workspace, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"optim": {"epochs": 1}, "model": {"flags": {"no_lstm": True}}}))
    out = tmp_path / "m.ckpt"
    assert main(["train", "--data", str(workspace / "data.bin"), "--out", str(out),
                 "--config", str(cfg)] + TINY) == EXIT_OK
    from stamotion.numerics import load_checkpoint

    meta, state = load_checkpoint(out)
    assert meta["config"]["model"]["flags"]["no_lstm"] is True
    assert not any(k.startswith("refiner.") for k in state)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure(workspace, tmp_path):
    code = main(["train", "--data", str(workspace / "data.bin"), "--out", str(tmp_path / "m.ckpt"),
                 "--set", "optim.lr=1e300"] + TINY)
    assert code == EXIT_NUMERICAL


def test_bad_thread_count(workspace, monkeypatch):
    monkeypatch.setenv("STAMOTION_THREADS", "zero")
    assert main(["eval", "--checkpoint", str(workspace / "m.ckpt"), "--data",
                 str(workspace / "data.bin"), "--out", str(workspace / "t.csv")]) == EXIT_CONFIG
