# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled training kernel for the first-stage networks.

Processes each mini-batch as a block: the layer products go through the
BLAS linked into scipy (zero Python dispatch per batch), while the
gather, ReLU, delta, and Adam stages are plain C loops. The networks are
small, so removing per-batch interpreter and allocation overhead is
where the speedup over the numpy kernel comes from; see
scripts/bench_firststage.py.

Row-major arrays are fed to the Fortran BLAS through the usual
transposition identities; the parity test against the numpy kernel
pins the conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, isfinite, pow, sqrt
from scipy.linalg cimport cython_blas

cnp.import_array()


cdef inline double _dot(const double* a, const double* b, long n) noexcept nogil:
    cdef double acc = 0.0
    cdef long k
    for k in range(n):
        acc += a[k] * b[k]
    return acc


cdef inline void _gemm_act(const double* W, const double* act, double* out,
                           int w, int B, int prev) noexcept nogil:
    # row-major out (B x w) = act (B x prev) @ W^T, W row-major (w x prev)
    cdef double one = 1.0, zero = 0.0
    cython_blas.dgemm("T", "N", &w, &B, &prev, &one,
                      <double*> W, &prev, <double*> act, &prev, &zero, out, &w)


cdef inline void _gemm_grad(const double* act, const double* delta, double* grad,
                            int prev, int w, int B) noexcept nogil:
    # row-major grad (w x prev) += delta^T (w x B) @ act (B x prev)
    cdef double one = 1.0
    cython_blas.dgemm("N", "T", &prev, &w, &B, &one,
                      <double*> act, &prev, <double*> delta, &w, &one, grad, &prev)


cdef inline void _gemm_delta(const double* W, const double* delta, double* out,
                             int prev, int w, int B) noexcept nogil:
    # row-major out (B x prev) = delta (B x w) @ W, W row-major (w x prev)
    cdef double one = 1.0, zero = 0.0
    cython_blas.dgemm("N", "N", &prev, &B, &w, &one,
                      <double*> W, &prev, <double*> delta, &w, &zero, out, &prev)


def train_mlp(double[::1] values,
              double[::1] adam_m,
              double[::1] adam_v,
              long input_dim,
              long[::1] widths,
              long[::1] w_offsets,
              long[::1] b_offsets,
              long head_offset,
              long skip_offset,
              long bias_offset,
              bint logistic,
              double[:, ::1] X,
              double[::1] y,
              long[:, ::1] schedule,
              long batch_size,
              double lr,
              double beta1,
              double beta2,
              double adam_eps,
              double l1,
              unsigned char[::1] weight_mask,
              long t0):
    """Run all scheduled epochs in place; return the Adam step counter.

    A negative return value -(epoch + 1) signals that parameters became
    non-finite after that epoch; the caller turns this into an exception.
    """
    cdef long n = X.shape[0]
    cdef long p = X.shape[1]
    cdef long n_params = values.shape[0]
    cdef long n_layers = widths.shape[0]
    cdef long epochs = schedule.shape[0]
    cdef long t = t0

    cdef long max_width = 1
    cdef long l
    for l in range(n_layers):
        if widths[l] > max_width:
            max_width = widths[l]

    xb_arr = np.zeros(batch_size * p, dtype=np.float64)
    yb_arr = np.zeros(batch_size, dtype=np.float64)
    acts_arr = np.zeros(max(n_layers, 1) * batch_size * max_width, dtype=np.float64)
    douts_arr = np.zeros(batch_size, dtype=np.float64)
    delta_arr = np.zeros(batch_size * max_width, dtype=np.float64)
    delta2_arr = np.zeros(batch_size * max_width, dtype=np.float64)
    grad_arr = np.zeros(n_params, dtype=np.float64)
    cdef double[::1] xb_mv = xb_arr
    cdef double[::1] yb_mv = yb_arr
    cdef double[::1] acts_mv = acts_arr
    cdef double[::1] douts_mv = douts_arr
    cdef double[::1] delta_mv = delta_arr
    cdef double[::1] delta2_mv = delta2_arr
    cdef double[::1] grad_mv = grad_arr

    cdef double* vals = &values[0]
    cdef double* am = &adam_m[0]
    cdef double* av = &adam_v[0]
    cdef double* xb = &xb_mv[0]
    cdef double* yb = &yb_mv[0]
    cdef double* acts = &acts_mv[0]
    cdef double* douts = &douts_mv[0]
    cdef double* delta = &delta_mv[0]
    cdef double* delta_next = &delta2_mv[0]
    cdef double* grad = &grad_mv[0]
    cdef const double* Xp = &X[0, 0]
    cdef const long* sched = &schedule[0, 0]
    cdef const unsigned char* wmask = &weight_mask[0]

    cdef long epoch, start, stop, bi, row, prev_dim, off, boff, width, unit, k, obs
    cdef int B
    cdef double z, out, dout, d, g, m, v, bc1, bc2, val, inv_batch
    cdef double* act_prev
    cdef double* act_cur
    cdef double* drow
    cdef long act_stride = batch_size * max_width
    cdef long status = 0
    cdef bint ok

    with nogil:
        for epoch in range(epochs):
            start = 0
            while start < n:
                stop = start + batch_size
                if stop > n:
                    stop = n
                B = <int> (stop - start)
                inv_batch = 1.0 / B

                # gather the batch rows into contiguous scratch
                for bi in range(B):
                    row = sched[epoch * n + start + bi]
                    for k in range(p):
                        xb[bi * p + k] = Xp[row * p + k]
                    yb[bi] = y[row]

                for k in range(n_params):
                    grad[k] = 0.0

                # forward: all layers over the whole batch
                act_prev = xb
                prev_dim = p
                for l in range(n_layers):
                    width = widths[l]
                    off = w_offsets[l]
                    boff = b_offsets[l]
                    act_cur = acts + l * act_stride
                    _gemm_act(vals + off, act_prev, act_cur,
                              <int> width, B, <int> prev_dim)
                    for obs in range(B):
                        for unit in range(width):
                            z = act_cur[obs * width + unit] + vals[boff + unit]
                            act_cur[obs * width + unit] = z if z > 0.0 else 0.0
                    act_prev = act_cur
                    prev_dim = width

                for obs in range(B):
                    out = vals[bias_offset] + _dot(vals + skip_offset, xb + obs * p, p)
                    if n_layers > 0:
                        out += _dot(vals + head_offset, act_prev + obs * prev_dim, prev_dim)
                    if logistic:
                        dout = (1.0 / (1.0 + exp(-out)) - yb[obs]) * inv_batch
                    else:
                        dout = 2.0 * (out - yb[obs]) * inv_batch
                    douts[obs] = dout

                # backward: head, skip, bias, then down the layers
                for obs in range(B):
                    dout = douts[obs]
                    grad[bias_offset] += dout
                    for k in range(p):
                        grad[skip_offset + k] += dout * xb[obs * p + k]
                if n_layers > 0:
                    width = widths[n_layers - 1]
                    act_cur = acts + (n_layers - 1) * act_stride
                    for obs in range(B):
                        dout = douts[obs]
                        drow = delta + obs * width
                        for k in range(width):
                            val = act_cur[obs * width + k]
                            grad[head_offset + k] += dout * val
                            drow[k] = dout * vals[head_offset + k] if val > 0.0 else 0.0
                    for l in range(n_layers - 1, -1, -1):
                        width = widths[l]
                        prev_dim = input_dim if l == 0 else widths[l - 1]
                        off = w_offsets[l]
                        boff = b_offsets[l]
                        act_prev = xb if l == 0 else acts + (l - 1) * act_stride
                        _gemm_grad(act_prev, delta, grad + off,
                                   <int> prev_dim, <int> width, B)
                        for obs in range(B):
                            for unit in range(width):
                                grad[boff + unit] += delta[obs * width + unit]
                        if l > 0:
                            _gemm_delta(vals + off, delta, delta_next,
                                        <int> prev_dim, <int> width, B)
                            for obs in range(B):
                                for k in range(prev_dim):
                                    if act_prev[obs * prev_dim + k] > 0.0:
                                        delta[obs * prev_dim + k] = delta_next[obs * prev_dim + k]
                                    else:
                                        delta[obs * prev_dim + k] = 0.0

                if l1 > 0.0:
                    for k in range(n_params):
                        if wmask[k]:
                            val = vals[k]
                            if val > 0.0:
                                grad[k] += l1
                            elif val < 0.0:
                                grad[k] -= l1

                t += 1
                bc1 = 1.0 - pow(beta1, t)
                bc2 = 1.0 - pow(beta2, t)
                for k in range(n_params):
                    g = grad[k]
                    m = beta1 * am[k] + (1.0 - beta1) * g
                    v = beta2 * av[k] + (1.0 - beta2) * g * g
                    am[k] = m
                    av[k] = v
                    vals[k] -= lr * (m / bc1) / (sqrt(v / bc2) + adam_eps)

                start = stop

            ok = True
            for k in range(n_params):
                if not isfinite(vals[k]):
                    ok = False
                    break
            if not ok:
                status = -(epoch + 1)
                break

    return status if status < 0 else t
