"""Pure-numpy implementations of the hot elementwise kernels.

Import-time fallback when the compiled extension is unavailable (or when
MLVAE_PURE_PYTHON is set). Semantics must match `_fastcore` exactly; the
parity suite in tests/test_kernels.py holds the two together.
"""

import numpy as np

NAME = "numpy"


def _sigmoid(x):
    # branch on sign to avoid exp overflow warnings in float32
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_gates_forward(z, c_prev):
    """Activate pre-gate values and advance the cell.

    z: (T, 4H) pre-activations in i, f, g, o order; c_prev: (T, H).
    Returns (h, c_new, acts, tanh_c) with acts the activated gates, kept
    for the backward pass.
    """
    H = c_prev.shape[1]
    acts = np.empty_like(z)
    acts[:, : 2 * H] = _sigmoid(z[:, : 2 * H])           # i, f
    acts[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])  # g
    acts[:, 3 * H :] = _sigmoid(z[:, 3 * H :])           # o
    i = acts[:, :H]
    f = acts[:, H : 2 * H]
    g = acts[:, 2 * H : 3 * H]
    o = acts[:, 3 * H :]
    c_new = f * c_prev + i * g
    tanh_c = np.tanh(c_new)
    h = o * tanh_c
    return h, c_new, acts, tanh_c


def lstm_gates_backward(dh, dc, acts, c_prev, tanh_c):
    """Gradients of lstm_gates_forward.

    dh, dc: (T, H) upstream gradients w.r.t. h and c_new (dc may be all
    zeros). Returns (dz, dc_prev).
    """
    H = c_prev.shape[1]
    i = acts[:, :H]
    f = acts[:, H : 2 * H]
    g = acts[:, 2 * H : 3 * H]
    o = acts[:, 3 * H :]
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(acts)
    dz[:, :H] = dc_total * g * i * (1.0 - i)
    dz[:, H : 2 * H] = dc_total * c_prev * f * (1.0 - f)
    dz[:, 2 * H : 3 * H] = dc_total * i * (1.0 - g * g)
    dz[:, 3 * H :] = dh * tanh_c * o * (1.0 - o)
    dc_prev = dc_total * f
    return dz, dc_prev


def scatter_add_rows(out, ids, rows):
    """out[ids[t]] += rows[t], in place."""
    np.add.at(out, ids, rows)


def adam_step(p, g, m, v, lr, b1, b2, eps, bc1, bc2):
    """Bias-corrected adaptive-moment update, all in place.

    bc1 = 1 - b1**t and bc2 = 1 - b2**t are precomputed by the caller.
    """
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
