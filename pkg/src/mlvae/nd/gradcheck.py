"""Central-difference verification of tape gradients."""

from __future__ import annotations

import numpy as np

from ..errors import PreconditionError
from .tensor import Tape, backward


class GradCheckReport:
    """Per-tensor and overall worst relative error of analytic vs numeric."""

    def __init__(self, tol):
        self.tol = tol
        self.per_tensor = {}
        self.failures = []  # (name, index, analytic, numeric, rel)
        self.n_checked = 0
        self.max_rel_err = 0.0
        self.worst = None  # (name, index, analytic, numeric)

    def _update(self, name, index, analytic, numeric):
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        self.n_checked += 1
        if rel > self.per_tensor.get(name, -1.0):
            self.per_tensor[name] = rel
        if rel > self.max_rel_err or self.worst is None:
            self.max_rel_err = rel
            self.worst = (name, index, analytic, numeric)
        if rel > self.tol:
            self.failures.append((name, index, analytic, numeric, rel))

    def passed(self, tol=None):
        return self.max_rel_err < (self.tol if tol is None else tol)

    def __str__(self):
        lines = [
            f"grad check: {self.n_checked} entries, max rel err {self.max_rel_err:.3e}, "
            f"{len(self.failures)} above tol {self.tol:g}"
        ]
        if self.worst is not None:
            name, index, a, n = self.worst
            lines.append(f"  worst {name}{list(index)}: analytic {a:.10e} vs numeric {n:.10e}")
        return "\n".join(lines)


def grad_check(fn, tensors, eps=1e-5, tol=1e-4, max_entries=None, rng=None):
    """Compare tape gradients of scalar `fn()` against central differences.

    `fn` rebuilds the forward pass on every call and must be deterministic
    (any noise frozen outside); this is verified by evaluating it twice.
    `tensors` maps names to the leaf Tensors to perturb (a ParamStore works
    directly). With `max_entries` set, large tensors are spot-checked at
    that many rng-drawn positions.
    """
    if hasattr(tensors, "names"):
        tensors = {name: tensors[name] for name in tensors.names()}
    items = list(tensors.items())
    for _, t in items:
        if t.grad is not None:
            t.grad[...] = 0.0

    with Tape():
        loss = fn()
        backward(loss)
    analytic = {name: (np.zeros_like(t.data) if t.grad is None else t.grad.copy())
                for name, t in items}

    f0 = float(fn().data)
    if float(fn().data) != f0:
        raise PreconditionError("grad_check: fn is not deterministic across evaluations")

    report = GradCheckReport(tol)
    for name, t in items:
        flat = t.data.reshape(-1)
        n = flat.shape[0]
        if max_entries is not None and n > max_entries:
            if rng is None:
                rng = np.random.default_rng(0)
            picks = rng.choice(n, size=max_entries, replace=False)
        else:
            picks = range(n)
        ga = analytic[name].reshape(-1)
        for k in picks:
            orig = flat[k]
            flat[k] = orig + eps
            f_plus = float(fn().data)
            flat[k] = orig - eps
            f_minus = float(fn().data)
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            report._update(name, np.unravel_index(int(k), t.data.shape), float(ga[k]), numeric)
        if t.grad is not None:
            t.grad[...] = 0.0
    return report
