"""
Frame-to-frame similarity
=========================

The aggregation block compares frames with normalised self-similarity
matrices and learned attention, mixes the maps and averages features.
"""

import numpy as np

from stamotion.config import desk_config
from stamotion.sta import StaModule, WindowInputs, nssm

np.set_printoptions(precision=3, suppress=True)

print(nssm(np.array([[1.0, 0.0], [0.0, 1.0]])).data)
print(nssm(np.array([[1.0, 0.0], [-1.0, 0.0]])).data)

cfg = desk_config().model
sta = StaModule(cfg, np.random.default_rng(0), np.float64)
rng = np.random.default_rng(1)
W = cfg.window
inputs = WindowInputs(rng.normal(size=(1, W, 8, 8, 16)), rng.normal(size=(1, W, 144)),
                      rng.normal(size=(1, W, 3)))
out = sta(inputs)
for name, m in out["maps"].items():
    print(f"{name:10s} row sums {m.data[0].sum(axis=1)[:3]} diag {np.diag(m.data[0])[:3]}")

# The residual identity is exact.
print("Z == f_H + Y:", np.array_equal(out["Z"].data, out["emb"]["f_H"].data + out["Y"].data))

# Shuffling frames shuffles every map the same way.
perm = rng.permutation(W)
shuf = sta(WindowInputs(inputs.features[:, perm], inputs.pose144[:, perm], inputs.omega[:, perm]))
print("equivariant:", all(np.array_equal(out["maps"][k].data[:, perm][:, :, perm], shuf["maps"][k].data)
                          for k in out["maps"]))
