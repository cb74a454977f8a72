"""Gaussian latent algebra: reparameterized sampling, closed-form KLs,
the learned conditional prior p(z1|z2), and the two-level joint KL.

Every function accepts a single vector (d,) or a row batch (B, d) and
reduces over the last axis, so KLs come back per-document.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .nd import ops
from .nd.tensor import Tensor, add_const, clamp, exp, reduce_sum, relu, scale, square

LOG_VAR_RANGE = 8.0


@dataclass
class GaussianParams:
    """Diagonal Gaussian as (mean, log variance) tensors of equal shape."""

    mean: Tensor
    log_var: Tensor

    def __post_init__(self):
        if self.mean.data.shape != self.log_var.data.shape:
            raise DimensionError(
                f"mean shape {self.mean.data.shape} != log_var shape {self.log_var.data.shape}"
            )


def standard_normal(d, dtype=np.float64):
    z = np.zeros(d, dtype=dtype)
    return GaussianParams(Tensor(z), Tensor(z.copy()))


def sample(p, noise):
    """mean + exp(log_var / 2) * noise, differentiable in both params.

    noise must match the parameter shape, except that a (d,) parameter
    vector broadcasts over (..., d) stacks of noise rows.
    """
    noise = np.asarray(noise)
    shape = p.mean.data.shape
    if noise.shape != shape and not (
        len(shape) == 1 and noise.ndim >= 1 and noise.shape[-1] == shape[0]
    ):
        raise DimensionError(f"noise shape {noise.shape} != mean shape {shape}")
    std = exp(scale(p.log_var, 0.5))
    return p.mean + std * Tensor(noise.astype(p.mean.data.dtype, copy=False))


def kl_standard(q):
    """KL(q || N(0, I)), summed over the last axis."""
    inner = add_const(exp(q.log_var) + square(q.mean) - q.log_var, -1.0)
    return scale(reduce_sum(inner, axis=-1), 0.5)


def kl_gaussians(q, p):
    """KL(q || p) for two diagonal Gaussians, summed over the last axis."""
    if q.mean.data.shape != p.mean.data.shape:
        raise DimensionError(
            f"q shape {q.mean.data.shape} != p shape {p.mean.data.shape}"
        )
    diff = q.mean - p.mean
    ratio = (exp(q.log_var) + square(diff)) * exp(scale(p.log_var, -1.0))
    inner = add_const((p.log_var - q.log_var) + ratio, -1.0)
    return scale(reduce_sum(inner, axis=-1), 0.5)


class PriorNet:
    """p(z1|z2): one ReLU hidden layer to (mean, log_var), log_var clamped.

    Zero head weights make it N(0, I) for every z2 (the flat-VAE prior).
    """

    def __init__(self, store, d_z2, d_z1, hidden, rng):
        self.h = ops.Linear(store, "prior.h", d_z2, hidden, rng)
        self.mean = ops.Linear(store, "prior.mean", hidden, d_z1, rng)
        self.log_var = ops.Linear(store, "prior.logvar", hidden, d_z1, rng)

    def __call__(self, z2):
        h = relu(self.h(z2))
        return GaussianParams(
            self.mean(h), clamp(self.log_var(h), -LOG_VAR_RANGE, LOG_VAR_RANGE)
        )


def joint_kl(prior_net, q1, q2, z2_sample):
    """Single-sample estimate of KL(q(z1,z2|x) || p(z1,z2)).

    outer = KL(q2 || N(0,I)) is exact; inner = KL(q1 || p(z1|z2_sample))
    estimates the expectation over q2 with the one reparameterized draw.
    Returns (total, inner, outer).
    """
    outer = kl_standard(q2)
    inner = kl_gaussians(q1, prior_net(z2_sample))
    return inner + outer, inner, outer
