"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_relative_error: float
    worst_parameter: str
    per_parameter: dict = field(default_factory=dict)
    checked_entries: int = 0

    def passed(self, tol: float) -> bool:
        return self.max_relative_error < tol


def relative_error(analytic, numeric, floor):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(loss_fn, named_params, seed=0, h=1e-5, max_entries=None, floor_scale=1e-7):
    """Compare backprop gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must rebuild the graph from the current parameter values and
    return a scalar Tensor. Parameters should hold float64 data. When
    ``max_entries`` is given, that many coordinates are sampled per
    parameter (seeded); otherwise every coordinate is checked.

    The denominator of the relative error is floored at
    ``floor_scale * max(1, |loss|)`` so entries whose true gradient is
    below finite-difference resolution are judged on absolute error.
    """
    named_params = list(named_params)
    for _, p in named_params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    base = float(loss.data)
    floor = floor_scale * max(1.0, abs(base))
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for n, p in named_params}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(0.0, "")
    for name, p in named_params:
        flat = p.data.reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        worst = 0.0
        for k in idx:
            old = flat[k]
            flat[k] = old + h
            up = float(loss_fn().data)
            flat[k] = old - h
            down = float(loss_fn().data)
            flat[k] = old
            numeric = (up - down) / (2 * h)
            err = relative_error(analytic[name].reshape(-1)[k], numeric, floor)
            worst = max(worst, err)
        report.per_parameter[name] = worst
        report.checked_entries += len(idx)
        if worst >= report.max_relative_error:
            report.max_relative_error = worst
            report.worst_parameter = name
    for _, p in named_params:
        p.grad = None
    return report
