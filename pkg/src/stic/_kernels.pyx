# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fused window kernels.

Same contract as :mod:`stic._kernels_py`; every window is processed in a
single forward/backward pass so no (c, d, w) temporaries are allocated.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def mechanism_transform(const double[:, :, ::1] windows,
                        const double[:, :, ::1] kernels,
                        const double[::1] slopes):
    cdef Py_ssize_t c = windows.shape[0], d = windows.shape[1], w = windows.shape[2]
    cdef Py_ssize_t n_layers = kernels.shape[0]
    out_arr = np.empty((c, d, w))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t p, i, k, n
    cdef double z
    for p in range(c):
        for i in range(d):
            for k in range(w):
                z = windows[p, i, k]
                for n in range(n_layers):
                    z = kernels[n, i, k] * z
                    if z < 0.0:
                        z = slopes[n] * z
                out[p, i, k] = z
    return out_arr


def mechanism_preactivations(windows, kernels, slopes):
    from stic._kernels_py import mechanism_preactivations as _pre
    return _pre(windows, kernels, slopes)


def window_predict(const double[:, :, ::1] windows,
                   const double[:, :, ::1] kernels,
                   const double[::1] slopes,
                   const double[:, :, ::1] effects):
    cdef Py_ssize_t c = windows.shape[0], d = windows.shape[1], w = windows.shape[2]
    cdef Py_ssize_t p, i, j, t
    transformed = mechanism_transform(windows, kernels, slopes)
    cdef double[:, :, ::1] out = transformed
    pred_arr = np.zeros((c, d))
    cdef double[:, ::1] pred = pred_arr
    cdef double v
    for p in range(c):
        for i in range(d):
            for t in range(w):
                v = out[p, i, w - 1 - t]
                for j in range(d):
                    pred[p, j] += v * effects[i, j, t]
    return pred_arr


def window_loss(const double[:, :, ::1] windows,
                const double[:, ::1] targets,
                const double[:, :, ::1] kernels,
                const double[::1] slopes,
                const double[:, :, ::1] effects):
    cdef Py_ssize_t c = windows.shape[0], d = windows.shape[1], w = windows.shape[2]
    cdef Py_ssize_t n_layers = kernels.shape[0]
    cdef Py_ssize_t p, i, j, k, t, n

    gk_arr = np.zeros((n_layers, d, w))
    gs_arr = np.zeros(n_layers)
    ge_arr = np.zeros((d, d, w))
    cdef double[:, :, ::1] gk = gk_arr
    cdef double[::1] gs = gs_arr
    cdef double[:, :, ::1] ge = ge_arr

    # per-window scratch: layer inputs/pre-activations, prediction, residual grads
    acts_arr = np.empty((n_layers + 1, d, w))
    pre_arr = np.empty((n_layers, d, w))
    gpred_arr = np.empty(d)
    gout_arr = np.empty((d, w))
    cdef double[:, :, ::1] acts = acts_arr
    cdef double[:, :, ::1] pre = pre_arr
    cdef double[::1] gpred = gpred_arr
    cdef double[:, ::1] gout = gout_arr

    cdef double loss = 0.0
    cdef double z, r, acc, g

    for p in range(c):
        for i in range(d):
            for k in range(w):
                z = windows[p, i, k]
                acts[0, i, k] = z
                for n in range(n_layers):
                    z = kernels[n, i, k] * z
                    pre[n, i, k] = z
                    if z < 0.0:
                        z = slopes[n] * z
                    acts[n + 1, i, k] = z

        for j in range(d):
            acc = 0.0
            for i in range(d):
                for t in range(w):
                    acc += acts[n_layers, i, w - 1 - t] * effects[i, j, t]
            r = acc - targets[p, j]
            loss += r * r
            gpred[j] = 2.0 * r

        for i in range(d):
            for t in range(w):
                k = w - 1 - t
                acc = 0.0
                for j in range(d):
                    ge[i, j, t] += acts[n_layers, i, k] * gpred[j]
                    acc += gpred[j] * effects[i, j, t]
                gout[i, k] = acc

        for n in range(n_layers - 1, -1, -1):
            for i in range(d):
                for k in range(w):
                    g = gout[i, k]
                    z = pre[n, i, k]
                    if z < 0.0:
                        gs[n] += g * z
                        g = slopes[n] * g
                    gk[n, i, k] += g * acts[n, i, k]
                    gout[i, k] = g * kernels[n, i, k]

    return loss, gk_arr, gs_arr, ge_arr
