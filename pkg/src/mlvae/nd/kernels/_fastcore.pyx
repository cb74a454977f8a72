# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled elementwise kernels: fused LSTM cell math, embedding-gradient
scatter, and the Adam update. Drop-in for numpy_backend (same signatures,
float32 and float64)."""

import numpy as np

cimport cython
from libc.math cimport exp, expf, sqrt, sqrtf, tanh, tanhf

NAME = "cython"

ctypedef fused real:
    float
    double


# branchless select forms: the only transcendental is exp(-|x|), which the
# compiler can vectorize through libmvec; |x| keeps the argument non-positive
# so nothing overflows


cdef inline real _sig(real x) noexcept nogil:
    cdef real e
    if real is float:
        e = expf(-x if x >= 0 else x)
    else:
        e = exp(-x if x >= 0 else x)
    return (<real>1.0 / (<real>1.0 + e)) if x >= 0 else (e / (<real>1.0 + e))


cdef inline real _tanh(real x) noexcept nogil:
    cdef real e, r
    if real is float:
        e = expf(<real>(-2.0) * (x if x >= 0 else -x))
    else:
        e = exp(<real>(-2.0) * (x if x >= 0 else -x))
    r = (<real>1.0 - e) / (<real>1.0 + e)
    return r if x >= 0 else -r


def _lstm_fwd(real[:, ::1] z, real[:, ::1] c_prev,
              real[:, ::1] h, real[:, ::1] c_new,
              real[:, ::1] acts, real[:, ::1] tanh_c):
    cdef Py_ssize_t T = c_prev.shape[0], H = c_prev.shape[1]
    cdef Py_ssize_t t, k
    cdef real c
    # separate flat passes per activation region keep each loop simple
    # enough for the compiler to vectorize the exp calls
    with nogil:
        for t in range(T):
            for k in range(2 * H):
                acts[t, k] = _sig(z[t, k])
            for k in range(2 * H, 3 * H):
                acts[t, k] = _tanh(z[t, k])
            for k in range(3 * H, 4 * H):
                acts[t, k] = _sig(z[t, k])
        for t in range(T):
            for k in range(H):
                c = acts[t, H + k] * c_prev[t, k] + acts[t, k] * acts[t, 2 * H + k]
                c_new[t, k] = c
                c = _tanh(c)
                tanh_c[t, k] = c
                h[t, k] = acts[t, 3 * H + k] * c


def lstm_gates_forward(z, c_prev):
    h = np.empty_like(c_prev)
    c_new = np.empty_like(c_prev)
    acts = np.empty_like(z)
    tanh_c = np.empty_like(c_prev)
    _lstm_fwd(z, c_prev, h, c_new, acts, tanh_c)
    return h, c_new, acts, tanh_c


def _lstm_bwd(real[:, ::1] dh, real[:, ::1] dc,
              real[:, ::1] acts, real[:, ::1] c_prev, real[:, ::1] tanh_c,
              real[:, ::1] dz, real[:, ::1] dc_prev):
    cdef Py_ssize_t T = c_prev.shape[0], H = c_prev.shape[1]
    cdef Py_ssize_t t, k
    cdef real i, f, g, o, tc, dct
    with nogil:
        for t in range(T):
            for k in range(H):
                i = acts[t, k]
                f = acts[t, H + k]
                g = acts[t, 2 * H + k]
                o = acts[t, 3 * H + k]
                tc = tanh_c[t, k]
                dct = dc[t, k] + dh[t, k] * o * (1.0 - tc * tc)
                dz[t, k] = dct * g * i * (1.0 - i)
                dz[t, H + k] = dct * c_prev[t, k] * f * (1.0 - f)
                dz[t, 2 * H + k] = dct * i * (1.0 - g * g)
                dz[t, 3 * H + k] = dh[t, k] * tc * o * (1.0 - o)
                dc_prev[t, k] = dct * f


def lstm_gates_backward(dh, dc, acts, c_prev, tanh_c):
    dz = np.empty_like(acts)
    dc_prev = np.empty_like(c_prev)
    _lstm_bwd(dh, dc, acts, c_prev, tanh_c, dz, dc_prev)
    return dz, dc_prev


def _scatter(real[:, ::1] out, long long[::1] ids, real[:, ::1] rows):
    cdef Py_ssize_t T = rows.shape[0], D = rows.shape[1]
    cdef Py_ssize_t t, d
    cdef long long r
    with nogil:
        for t in range(T):
            r = ids[t]
            for d in range(D):
                out[r, d] += rows[t, d]


def scatter_add_rows(out, ids, rows):
    _scatter(out, np.ascontiguousarray(ids, dtype=np.int64), rows)


def _adam(real[::1] p, real[::1] g, real[::1] m, real[::1] v,
          double lr, double b1, double b2, double eps, double bc1, double bc2):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t k
    cdef real rb1 = <real>b1, rb2 = <real>b2, rc1 = <real>(1.0 - b1), rc2 = <real>(1.0 - b2)
    cdef real rlr = <real>lr, reps = <real>eps, rbc1 = <real>bc1, rbc2 = <real>bc2
    cdef real mk, vk
    with nogil:
        for k in range(n):
            mk = rb1 * m[k] + rc1 * g[k]
            vk = rb2 * v[k] + rc2 * g[k] * g[k]
            m[k] = mk
            v[k] = vk
            if real is float:
                p[k] -= rlr * (mk / rbc1) / (sqrtf(vk / rbc2) + reps)
            else:
                p[k] -= rlr * (mk / rbc1) / (sqrt(vk / rbc2) + reps)


def adam_step(p, g, m, v, lr, b1, b2, eps, bc1, bc2):
    _adam(p.ravel(), g.ravel(), m.ravel(), v.ravel(),
          lr, b1, b2, eps, bc1, bc2)
