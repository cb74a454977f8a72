"""Backend selection for the hot elementwise kernels.

The compiled Cython core is preferred; the numpy module is a behavioral
twin used when the extension is missing or MLVAE_PURE_PYTHON is set.
`BACKEND` names whichever one won.
"""

import os

from . import numpy_backend

if os.environ.get("MLVAE_PURE_PYTHON"):
    _impl = numpy_backend
else:
    try:
        from . import _fastcore as _impl
    except ImportError:
        _impl = numpy_backend

BACKEND = _impl.NAME
lstm_gates_forward = _impl.lstm_gates_forward
lstm_gates_backward = _impl.lstm_gates_backward
scatter_add_rows = _impl.scatter_add_rows
adam_step = _impl.adam_step
