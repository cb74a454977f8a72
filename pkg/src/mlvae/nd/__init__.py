"""Numeric core: tape autodiff, fused ops, parameters, Adam, checkpoints."""

from . import checkpoint, kernels, ops
from .gradcheck import GradCheckReport, grad_check
from .optim import Adam, clip_global_norm
from .params import INIT_RANGE, ParamStore
from .tensor import Tape, Tensor, backward

__all__ = [
    "Adam",
    "GradCheckReport",
    "INIT_RANGE",
    "ParamStore",
    "Tape",
    "Tensor",
    "backward",
    "checkpoint",
    "clip_global_norm",
    "grad_check",
    "kernels",
    "ops",
]
