"""Adam and global-norm gradient clipping over a ParamStore."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from . import kernels


def clip_global_norm(store, max_norm):
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm as a python float.
    """
    total = 0.0
    for name in store.names():
        g = store[name].grad
        total += float(np.dot(g.ravel(), g.ravel()))
    norm = float(np.sqrt(total))
    if norm > max_norm:
        factor = store.dtype.type(max_norm / norm)
        for name in store.names():
            store[name].grad *= factor
    return norm


class Adam:
    """Adam with bias correction; moment buffers appear on the first step.

    `step()` consumes the current gradients (updating every parameter in
    the store) and zeroes them afterwards. A non-finite gradient raises
    NumericError naming the parameter.
    """

    def __init__(self, store, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m = None
        self._v = None

    def step(self):
        if self._m is None:
            self._m = {n: np.zeros_like(self.store[n].data) for n in self.store.names()}
            self._v = {n: np.zeros_like(self.store[n].data) for n in self.store.names()}
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name in self.store.names():
            p = self.store[name]
            if not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient for {name}")
            kernels.adam_step(
                p.data, p.grad, self._m[name], self._v[name],
                self.lr, self.beta1, self.beta2, self.eps, bc1, bc2,
            )
        self.store.zero_grads()
