"""Named parameter store: ordered, uniquely named arrays plus gradient buffers."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor

INIT_RANGE = 0.08  # uniform init half-width for weight matrices


class ParamStore:
    """Ordered map name -> parameter Tensor (value + same-shape grad buffer).

    Insertion order is the canonical iteration order everywhere (checkpoint
    layout, optimizer sweep, gradient checking), which keeps runs
    reproducible. One store owns one model; values may be shared read-only
    across threads once training stops.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._entries: dict[str, Tensor] = {}

    def add(self, name, value):
        if name in self._entries:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.ascontiguousarray(value, dtype=self.dtype), name=name)
        t.grad = np.zeros_like(t.data)
        self._entries[name] = t
        return t

    def weight(self, name, shape, rng):
        return self.add(name, rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape))

    def zeros(self, name, shape):
        return self.add(name, np.zeros(shape))

    def __getitem__(self, name):
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.items())

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def zero_grads(self):
        for t in self._entries.values():
            t.grad[...] = 0

    def n_values(self):
        return sum(t.data.size for t in self._entries.values())

    def astype(self, dtype):
        """Copy of the store in another precision (grads reset to zero)."""
        out = ParamStore(dtype)
        for name, t in self._entries.items():
            out.add(name, t.data)
        return out

    def load_values(self, arrays):
        """Overwrite values from a name -> array mapping (shapes must match)."""
        unknown = [n for n in arrays if n not in self._entries]
        if unknown:
            raise KeyError(f"checkpoint has entries the model lacks: {unknown}")
        for name, t in self._entries.items():
            if name not in arrays:
                raise KeyError(f"checkpoint is missing parameter {name!r}")
            a = arrays[name]
            if tuple(a.shape) != tuple(t.data.shape):
                raise DimensionError(
                    f"parameter {name!r}: checkpoint shape {tuple(a.shape)} "
                    f"!= model shape {tuple(t.data.shape)}"
                )
            t.data[...] = a.astype(self.dtype, copy=False)
