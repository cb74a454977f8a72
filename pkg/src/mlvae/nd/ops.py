"""The neural primitives the networks are built from.

Each op is a fused tape node: one forward call, one backward closure.
Everything is batched over leading rows; 1-D inputs are accepted and give
1-D outputs. Matrix products go to BLAS; the per-element LSTM math, the
embedding-gradient scatter, and Adam run on the selected kernel backend.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError, NumericError, PreconditionError
from . import kernels
from .tensor import Tensor, _accum, _accum_owned, _record


def _rows(x):
    """View a vector as a one-row matrix; remember whether to squeeze."""
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise DimensionError(f"expected vector or matrix, got shape {x.shape}")


def linear(x, W, b):
    """x @ W.T + b with W of shape (d_out, d_in)."""
    xd, squeeze = _rows(x.data)
    if xd.shape[1] != W.data.shape[1]:
        raise DimensionError(
            f"linear {W.name or 'weight'}: input dim {xd.shape[1]} != {W.data.shape[1]}"
        )
    y = xd @ W.data.T + b.data
    out = Tensor(y[0] if squeeze else y)

    def bwd():
        g = out.grad
        if g is None:
            return
        gm = g[None, :] if squeeze else g
        _accum_owned(x, (gm @ W.data)[0] if squeeze else gm @ W.data)
        _accum_owned(W, gm.T @ xd)
        _accum_owned(b, gm.sum(axis=0))

    return _record(out, bwd)


def lstm_step(x, h, c, W, b):
    """One LSTM cell step. W is (4H, d_in + H), gate order i, f, g, o.

    Returns (h', c'); h' = o * tanh(c'). Accepts vectors or row-batches.
    """
    xd, squeeze = _rows(x.data)
    hd, _ = _rows(h.data)
    cd, _ = _rows(c.data)
    H = hd.shape[1]
    d_in = xd.shape[1]
    if W.data.shape != (4 * H, d_in + H) or cd.shape[1] != H:
        raise DimensionError(
            f"lstm_step {W.name or 'weight'}: got input {xd.shape}, state {hd.shape}/"
            f"{cd.shape}, weight {W.data.shape}"
        )
    Wx = W.data[:, :d_in]
    Wh = W.data[:, d_in:]
    z = xd @ Wx.T + hd @ Wh.T + b.data
    z = np.ascontiguousarray(z)
    h_new, c_new, acts, tanh_c = kernels.lstm_gates_forward(z, cd)
    out_h = Tensor(h_new[0] if squeeze else h_new)
    out_c = Tensor(c_new[0] if squeeze else c_new)

    def bwd():
        gh = out_h.grad
        gc = out_c.grad
        if gh is None and gc is None:
            return
        dh = np.zeros_like(h_new) if gh is None else np.ascontiguousarray(np.atleast_2d(gh))
        dc = np.zeros_like(c_new) if gc is None else np.ascontiguousarray(np.atleast_2d(gc))
        dz, dc_prev = kernels.lstm_gates_backward(dh, dc, acts, cd, tanh_c)
        _accum_owned(x, (dz @ Wx)[0] if squeeze else dz @ Wx)
        _accum_owned(h, (dz @ Wh)[0] if squeeze else dz @ Wh)
        _accum_owned(c, dc_prev[0] if squeeze else dc_prev)
        dW = np.empty_like(W.data)
        dW[:, :d_in] = dz.T @ xd
        dW[:, d_in:] = dz.T @ hd
        _accum_owned(W, dW)
        _accum_owned(b, dz.sum(axis=0))

    _record(out_h, bwd)
    return out_h, out_c


def embed(table, ids):
    """Row lookup into an embedding table; gradient scatters onto rows."""
    ids = np.asarray(ids)
    V = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexError(
            f"embed {table.name or 'table'}: id out of range [0, {V}) "
            f"(got {int(ids.min())}..{int(ids.max())})"
        )
    out = Tensor(table.data[ids])

    def bwd():
        g = out.grad
        if g is None:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        rows = np.ascontiguousarray(g.reshape(-1, table.data.shape[1]))
        kernels.scatter_add_rows(table.grad, ids.reshape(-1).astype(np.int64), rows)

    return _record(out, bwd)


def softmax_xent(logits, targets):
    """Per-row cross-entropy: logsumexp(row) - row[target], max-stabilized.

    logits (T, V) with int targets (T,) gives losses (T,); a single (V,)
    vector with a scalar target gives a scalar.
    """
    ld, squeeze = _rows(logits.data)
    tg = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    V = ld.shape[1]
    if V < 2:
        raise PreconditionError(f"softmax_xent needs >= 2 classes, got {V}")
    if tg.shape[0] != ld.shape[0]:
        raise DimensionError(f"{ld.shape[0]} logit rows vs {tg.shape[0]} targets")
    if tg.min() < 0 or tg.max() >= V:
        raise IndexError(f"target out of range [0, {V})")
    if not np.isfinite(ld).all():
        raise NumericError("softmax_xent: non-finite logits")
    m = ld.max(axis=1)
    ex = np.exp(ld - m[:, None])
    Z = ex.sum(axis=1)
    rows = np.arange(ld.shape[0])
    losses = np.log(Z) + m - ld[rows, tg]
    out = Tensor(losses[0] if squeeze else losses)

    def bwd():
        g = out.grad
        if g is None:
            return
        probs = ex / Z[:, None]
        probs[rows, tg] -= 1.0
        probs *= np.atleast_1d(g)[:, None]
        _accum_owned(logits, probs[0] if squeeze else probs)

    return _record(out, bwd)


def conv1d_maxpool(seq, filters, lengths=None):
    """Multi-width 1-D convolution with ReLU and max-over-positions pooling.

    seq: (B, L, D) or a single (L, D) sequence. filters: list of
    (width, W, b) with W of shape (F, width*D). Rows at or beyond a row's
    length are treated as zeros; a sequence shorter than a width is
    zero-padded up to it (exactly one window). Output concatenates every
    filter's maximum: (B, sum F).
    """
    sd = seq.data
    squeeze = sd.ndim == 2
    if squeeze:
        sd = sd[None]
    if sd.ndim != 3:
        raise DimensionError(f"conv1d_maxpool: expected (B, L, D) sequence, got {seq.data.shape}")
    B, L, D = sd.shape
    if L == 0:
        raise PreconditionError("conv1d_maxpool: empty sequence")
    if lengths is None:
        lens = np.full(B, L, dtype=np.int64)
    else:
        lens = np.asarray(lengths, dtype=np.int64)
        if lens.min() < 1:
            raise PreconditionError("conv1d_maxpool: every row needs at least one real position")
    rowmask = (np.arange(L)[None, :] < lens[:, None]).astype(sd.dtype)
    sz = sd * rowmask[:, :, None]

    outs = []
    caches = []
    for w, W, b in filters:
        if W.data.shape[1] != w * D:
            raise DimensionError(
                f"conv1d_maxpool {W.name or 'filter'}: width {w} expects {w * D} inputs, "
                f"weight has {W.data.shape[1]}"
            )
        Lp = max(L, w)
        sp = sz if Lp == L else np.concatenate(
            [sz, np.zeros((B, Lp - L, D), dtype=sd.dtype)], axis=1
        )
        P = Lp - w + 1
        cols = np.empty((B, P, w * D), dtype=sd.dtype)
        for i in range(w):
            cols[:, :, i * D : (i + 1) * D] = sp[:, i : i + P, :]
        F = W.data.shape[0]
        act = np.maximum(cols.reshape(B * P, w * D) @ W.data.T + b.data, 0).reshape(B, P, F)
        n_valid = np.clip(lens - w + 1, 1, P)
        valid = np.arange(P)[None, :] < n_valid[:, None]
        scored = np.where(valid[:, :, None], act, -1.0)
        arg = scored.argmax(axis=1)
        mx = np.take_along_axis(scored, arg[:, None, :], axis=1)[:, 0, :]
        outs.append(mx)
        caches.append((w, W, b, cols, arg, mx, P, F))
    out_data = np.concatenate(outs, axis=1)
    out = Tensor(out_data[0] if squeeze else out_data)

    def bwd():
        g = out.grad
        if g is None:
            return
        gm = np.atleast_2d(g)
        dseq = np.zeros_like(sd)
        off = 0
        for w, W, b, cols, arg, mx, P, F in caches:
            gpart = gm[:, off : off + F] * (mx > 0)
            off += F
            dact = np.zeros((B, P, F), dtype=sd.dtype)
            np.put_along_axis(dact, arg[:, None, :], gpart[:, None, :], axis=1)
            flat = dact.reshape(B * P, F)
            _accum_owned(W, flat.T @ cols.reshape(B * P, w * D))
            _accum_owned(b, flat.sum(axis=0))
            dcols = (flat @ W.data).reshape(B, P, w * D)
            for i in range(w):
                hi = min(i + P, L)
                if hi > i:
                    dseq[:, i:hi, :] += dcols[:, : hi - i, i * D : (i + 1) * D]
        dseq *= rowmask[:, :, None]
        _accum_owned(seq, dseq[0] if squeeze else dseq)

    return _record(out, bwd)


# ---------------------------------------------------------------------------
# thin layer wrappers: register parameters once, then apply the ops


class Linear:
    def __init__(self, store, name, d_in, d_out, rng):
        self.W = store.weight(f"{name}.W", (d_out, d_in), rng)
        self.b = store.zeros(f"{name}.b", (d_out,))

    def __call__(self, x):
        return linear(x, self.W, self.b)


class LSTMCell:
    """Standard LSTM cell; forget-gate bias starts at +1."""

    def __init__(self, store, name, d_in, d_h, rng):
        self.d_in = d_in
        self.d_h = d_h
        self.W = store.weight(f"{name}.W", (4 * d_h, d_in + d_h), rng)
        b = np.zeros(4 * d_h)
        b[d_h : 2 * d_h] = 1.0
        self.b = store.add(f"{name}.b", b)

    def step(self, x, h, c):
        return lstm_step(x, h, c, self.W, self.b)

    def zero_state(self, batch, dtype):
        shape = (batch, self.d_h) if batch else (self.d_h,)
        z = np.zeros(shape, dtype=dtype)
        return Tensor(z), Tensor(z.copy())


class ConvMax:
    """A bank of conv+maxpool filters over several window widths."""

    def __init__(self, store, name, d_in, widths, n_filters, rng):
        self.filters = [
            (
                w,
                store.weight(f"{name}.w{w}.W", (n_filters, w * d_in), rng),
                store.zeros(f"{name}.w{w}.b", (n_filters,)),
            )
            for w in widths
        ]
        self.d_out = n_filters * len(widths)

    def __call__(self, seq, lengths=None):
        return conv1d_maxpool(seq, self.filters, lengths=lengths)
