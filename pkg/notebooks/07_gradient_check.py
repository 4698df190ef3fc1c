"""
Checking gradients
==================

Reverse-mode gradients of the hand-written autodiff against central finite
differences, first on one affine layer and then on the whole pipeline at
small sizes.
"""

import numpy as np

from stamotion.numerics import Linear, grad_check
from stamotion.numerics import autodiff as ad

rng = np.random.default_rng(0)
layer = Linear(5, 3, rng, np.float64)
x = rng.normal(size=(4, 5))
y = rng.normal(size=(4, 3))


def loss():
    return ad.tsum((layer(ad.Tensor(x)) - y) ** 2)


report = grad_check(loss, layer.named_parameters())
print(f"affine layer: worst relative error {report.max_relative_error:.2e}")

# The full pipeline check lives with the acceptance tests; reuse it here.
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from test_acceptance import criterion_1  # noqa: E402

print(criterion_1())
