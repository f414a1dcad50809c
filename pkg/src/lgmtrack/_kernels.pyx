# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Direct-loop temporal convolution kernels ("same" zero padding, odd width).

Shapes: x (N, C_in, T), w (C_out, C_in, k), grad/out (N, C_out, T).
All arrays must be C-contiguous and share one floating dtype.
"""
cimport cython
from cython cimport floating


def conv1d_forward(floating[:, :, ::1] x, floating[:, :, ::1] w,
                   floating[::1] b, floating[:, :, ::1] out):
    cdef Py_ssize_t n_nodes = x.shape[0], c_in = x.shape[1], steps = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], width = w.shape[2]
    cdef Py_ssize_t pad = (width - 1) // 2
    cdef Py_ssize_t n, o, c, j, t, shift, lo, hi
    cdef floating wv
    for n in range(n_nodes):
        for o in range(c_out):
            for t in range(steps):
                out[n, o, t] = b[o]
            for c in range(c_in):
                for j in range(width):
                    wv = w[o, c, j]
                    shift = j - pad
                    lo = -shift if shift < 0 else 0
                    hi = steps - shift if shift > 0 else steps
                    for t in range(lo, hi):
                        out[n, o, t] += wv * x[n, c, t + shift]


def conv1d_backward_input(floating[:, :, ::1] grad, floating[:, :, ::1] w,
                          floating[:, :, ::1] dx):
    cdef Py_ssize_t n_nodes = grad.shape[0], c_out = grad.shape[1], steps = grad.shape[2]
    cdef Py_ssize_t c_in = w.shape[1], width = w.shape[2]
    cdef Py_ssize_t pad = (width - 1) // 2
    cdef Py_ssize_t n, o, c, j, t, shift, lo, hi
    cdef floating wv
    dx[:, :, :] = 0
    for n in range(n_nodes):
        for c in range(c_in):
            for o in range(c_out):
                for j in range(width):
                    wv = w[o, c, j]
                    shift = j - pad
                    lo = -shift if shift < 0 else 0
                    hi = steps - shift if shift > 0 else steps
                    for t in range(lo, hi):
                        dx[n, c, t + shift] += wv * grad[n, o, t]


def conv1d_backward_weight(floating[:, :, ::1] grad, floating[:, :, ::1] x,
                           floating[:, :, ::1] dw, floating[::1] db):
    cdef Py_ssize_t n_nodes = grad.shape[0], c_out = grad.shape[1], steps = grad.shape[2]
    cdef Py_ssize_t c_in = x.shape[1], width = dw.shape[2]
    cdef Py_ssize_t pad = (width - 1) // 2
    cdef Py_ssize_t n, o, c, j, t, shift, lo, hi
    cdef floating acc
    dw[:, :, :] = 0
    db[:] = 0
    for o in range(c_out):
        acc = 0
        for n in range(n_nodes):
            for t in range(steps):
                acc = acc + grad[n, o, t]
        db[o] = acc
        for c in range(c_in):
            for j in range(width):
                shift = j - pad
                lo = -shift if shift < 0 else 0
                hi = steps - shift if shift > 0 else steps
                acc = 0
                for n in range(n_nodes):
                    for t in range(lo, hi):
                        acc = acc + grad[n, o, t] * x[n, c, t + shift]
                dw[o, c, j] = acc
