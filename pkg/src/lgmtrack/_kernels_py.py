"""Numpy implementation of the temporal convolution kernels.

Same signatures as the compiled ``_kernels`` module; results are written into
the preallocated output arrays.
"""
import numpy as np


def _padded(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad)))


def conv1d_forward(x, w, b, out):
    steps = x.shape[2]
    pad = (w.shape[2] - 1) // 2
    xp = _padded(x, pad)
    out[...] = b[None, :, None]
    for j in range(w.shape[2]):
        out += np.matmul(w[:, :, j], xp[:, :, j:j + steps])


def conv1d_backward_input(grad, w, dx):
    steps = grad.shape[2]
    pad = (w.shape[2] - 1) // 2
    dxp = np.zeros((grad.shape[0], w.shape[1], steps + 2 * pad), dtype=grad.dtype)
    for j in range(w.shape[2]):
        dxp[:, :, j:j + steps] += np.matmul(w[:, :, j].T, grad)
    dx[...] = dxp[:, :, pad:pad + steps]


def conv1d_backward_weight(grad, x, dw, db):
    steps = grad.shape[2]
    pad = (dw.shape[2] - 1) // 2
    xp = _padded(x, pad)
    for j in range(dw.shape[2]):
        dw[:, :, j] = np.tensordot(grad, xp[:, :, j:j + steps], axes=([0, 2], [0, 2]))
    db[...] = grad.sum(axis=(0, 2))
