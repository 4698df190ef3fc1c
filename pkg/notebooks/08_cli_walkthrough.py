"""
Command line walkthrough
========================

Generate a dataset, train a few steps, then infer, evaluate and dump an
acceleration curve, all through the ``stamotion`` entry point. Step counts
are tiny so this finishes quickly; the numbers are not meant to be good.
"""

import csv
import tempfile
from pathlib import Path

from stamotion.cli import main

work = Path(tempfile.mkdtemp())
data, ckpt = work / "data.bin", work / "model.ckpt"


def run(*argv):
    code = main([str(a) for a in argv])
    print(f"$ stamotion {' '.join(map(str, argv))}  -> exit {code}")
    return code


run("gen-data", "--out", data, "--seed", 0, "--num-seqs", 3, "--length", 40, "--with-inputs")
run("train", "--data", data, "--out", ckpt, "--max-steps", 4, "--log", work / "train.csv")
print(open(work / "train.csv").read().splitlines()[:2])

run("infer", "--checkpoint", ckpt, "--data", data, "--out", work / "pred")
print("inference files:", sorted(p.name for p in (work / "pred").iterdir()))

run("eval", "--checkpoint", ckpt, "--data", data, "--out", work / "metrics.csv")
run("eval", "--init", "--data", data, "--out", work / "init.csv")
for name in ("metrics.csv", "init.csv"):
    rows = list(csv.DictReader(open(work / name)))
    print(name, {k: round(float(v), 2) for k, v in rows[-1].items() if k != "seq_id"})

run("accel-curve", "--checkpoint", ckpt, "--data", data, "--seq-id", "s0_0000", "--out", work / "curve.csv")
print(open(work / "curve.csv").read().splitlines()[:3])

# Bad input gets a distinct exit code instead of a traceback.
run("eval", "--init", "--data", work / "missing.bin", "--out", work / "x.csv")
run("train", "--data", data, "--out", work / "bad.ckpt", "--set", "optim.lr=-1")
