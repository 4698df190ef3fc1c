"""
Training and evaluation
=======================

A short training run on a handful of sequences, then held-out metrics for
the refined output and for the raw initial estimates. Twenty seconds of
training barely moves the model off its starting point, so expect the two
columns to be close. The acceptance protocol (32 sequences of 256 frames,
30 epochs) is where the refined column pulls ahead.
"""

import logging
import time

from stamotion.body_model import default_template
from stamotion.config import desk_config
from stamotion.dataio import DatasetFile, generate_synthetic
from stamotion.providers import SyntheticProvider
from stamotion.training import evaluate, evaluate_inits, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

tmpl = default_template()
cfg = desk_config()
cfg.optim.epochs = 12
train_seqs = generate_synthetic(10, 16, 128, tmpl=tmpl)
test_seqs = generate_synthetic(20, 4, 128, tmpl=tmpl)
prov = SyntheticProvider()

t0 = time.perf_counter()
result = train(cfg, DatasetFile(train_seqs, tmpl), prov)
print(f"{len(result.log)} steps in {time.perf_counter() - t0:.0f}s, "
      f"loss {result.log[0]['L_final']:.1f} -> {result.log[-1]['L_final']:.1f}")

_, refined = evaluate(result.model, test_seqs, prov, cfg, tmpl)
_, init = evaluate_inits(test_seqs, prov, tmpl)
for key in refined:
    print(f"{key:9s} init {init[key]:8.2f}  refined {refined[key]:8.2f}")
