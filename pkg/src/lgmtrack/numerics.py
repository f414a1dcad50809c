"""Minimal reverse-mode autodiff over dense numpy arrays.

Only the operations the two embedding networks need are provided. Each op
returns a new :class:`Tensor` that remembers its parents and a closure mapping
the output gradient to parent gradients; :func:`backward` walks that graph in
reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import kernels

ROW_NORM_EPS = 1e-12
DEGREE_EPS = 1e-8


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class Tensor:
    """An array plus the bookkeeping needed to differentiate through it."""

    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, parents=(), backward=None):
        self.data = np.asarray(data)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{label})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name):
    return Tensor(np.array(data), requires_grad=True, name=name)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _make(data, parents, backward):
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, backward=backward)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    return as_tensor(a), as_tensor(b)


# elementwise -----------------------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), back)


def sub(a, b):
    a, b = _pair(a, b)
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), back)


def mul(a, b):
    a, b = _pair(a, b)
    out = a.data * b.data

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), back)


def scale(a, c):
    a = as_tensor(a)
    c = a.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def square(a):
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def relu(a):
    a = as_tensor(a)
    on = a.data > 0  # subgradient 0 at 0
    return _make(np.where(on, a.data, 0).astype(a.dtype), (a,), lambda g: (g * on,))


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def activation(a, kind):
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    raise ConfigError(f"unknown activation {kind!r}")


def log(a):
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def back(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0).astype(a.dtype),)

    return _make(out, (a,), back)


def clip(a, lo, hi):
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# reductions and shape ----------------------------------------------------------

def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).astype(a.dtype),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).astype(a.dtype),)

    return _make(np.asarray(out, dtype=a.dtype), (a,), back)


def mean(a):
    a = as_tensor(a)
    return scale(sum(a), 1.0 / max(a.data.size, 1))


def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a):
    a = as_tensor(a)
    return _make(a.data.T, (a,), lambda g: (g.T,))


def take_rows(a, index):
    """Rows of ``a`` at ``index`` (repeats allowed; gradients scatter-add)."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(a.data[index], (a,), back)


def take_entries(a, rows, cols):
    """Entries ``a[rows[i], cols[i]]`` of a matrix as a vector."""
    a = as_tensor(a)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return _make(a.data[rows, cols], (a,), back)


# linear algebra ----------------------------------------------------------------

def matmul(a, b):
    a, b = _pair(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects matrices, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), back)


def node_matmul(s, x):
    """Apply an N×N matrix along the leading (node) axis of an N×... tensor."""
    s, x = _pair(s, x)
    rest = x.shape[1:]
    flat = reshape(x, (x.shape[0], -1))
    return reshape(matmul(s, flat), (s.shape[0],) + rest)


def temporal_conv(x, w, b):
    """Per-node 1-D cross-correlation along time with "same" zero padding.

    ``x`` is N×C_in×T, ``w`` is C_out×C_in×k (k odd), ``b`` has length C_out.
    """
    x, w = _pair(x, w)
    b = as_tensor(b, dtype=w.dtype) if not isinstance(b, Tensor) else b
    if w.data.ndim != 3 or x.data.ndim != 3:
        raise ShapeError(f"temporal_conv expects 3-D input/kernel, got {x.shape}, {w.shape}")
    if w.shape[2] % 2 == 0:
        raise ConfigError(f"temporal kernel width must be odd, got {w.shape[2]}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"kernel expects {w.shape[1]} input channels, input has {x.shape[1]}")
    dtype = np.result_type(x.dtype, w.dtype)
    xd = np.ascontiguousarray(x.data, dtype=dtype)
    wd = np.ascontiguousarray(w.data, dtype=dtype)
    bd = np.ascontiguousarray(b.data, dtype=dtype)
    out = np.empty((xd.shape[0], wd.shape[0], xd.shape[2]), dtype=dtype)
    kernels.conv1d_forward(xd, wd, bd, out)

    def back(g):
        g = np.ascontiguousarray(g, dtype=dtype)
        dx = np.empty_like(xd)
        dw = np.empty_like(wd)
        db = np.empty_like(bd)
        kernels.conv1d_backward_input(g, wd, dx)
        kernels.conv1d_backward_weight(g, xd, dw, db)
        return dx, dw, db

    return _make(out, (x, w, b), back)


def l2_normalize_rows(x, eps=ROW_NORM_EPS):
    """Divide each row by max(||row||, eps)."""
    x = as_tensor(x)
    norms = np.sqrt(np.sum(x.data * x.data, axis=1, keepdims=True))
    denom = np.maximum(norms, eps)
    out = x.data / denom
    clamped = norms <= eps

    def back(g):
        proj = np.sum(g * out, axis=1, keepdims=True)
        full = (g - out * proj) / denom
        return (np.where(clamped, g / denom, full),)

    return _make(out, (x,), back)


def sym_normalize(a, eps=DEGREE_EPS):
    """D^-1/2 · A · D^-1/2 with D_ii = max(sum_j A_ij, eps)."""
    a = as_tensor(a)
    deg = np.sum(a.data, axis=1)
    live = deg > eps
    d = np.maximum(deg, eps)
    r = 1.0 / np.sqrt(d)
    out = a.data * r[:, None] * r[None, :]

    def back(g):
        ga = g * r[:, None] * r[None, :]
        # d out_ij / d r_i feeds back through the row sums of A
        gr = np.sum(g * a.data * r[None, :], axis=1) + np.sum(g * a.data * r[:, None], axis=0)
        gd = np.where(live, -0.5 * gr * r / d, 0.0)
        return ((ga + gd[:, None]).astype(a.dtype),)

    return _make(out, (a,), back)


# backward ----------------------------------------------------------------------

def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] | Mapping[str, Tensor] | None = None):
    """Gradients of a scalar ``loss``.

    Returns ``{name: ndarray}`` for every named leaf reached. When ``params`` is
    given, the result has exactly those entries, with zeros for parameters the
    loss does not depend on.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    if loss.requires_grad:
        for node in reversed(_topo_order(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                leaves[id(node)] = (node, g)
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    if params is None:
        return {n.name: g for n, g in leaves.values() if n.name is not None}
    if isinstance(params, Mapping):
        items = list(params.items())
    else:
        items = [(p.name, p) for p in params]
    out = {}
    for name, p in items:
        hit = leaves.get(id(p))
        out[name] = np.array(hit[1], dtype=p.dtype).reshape(p.shape) if hit else np.zeros_like(p.data)
    return out


# finite differences -------------------------------------------------------------

def finite_difference_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor] | Mapping[str, Tensor],
    eps: float = 1e-5,
    max_coords: int = 40,
    rng: np.random.Generator | None = None,
    grads: Mapping[str, np.ndarray] | None = None,
    floor: float = 1e-6,
) -> float:
    """Max relative error between ``backward`` and central differences.

    ``f`` recomputes the scalar loss from the current parameter values, which
    are perturbed in place. Large tensors are probed on a random subset of at
    most ``max_coords`` coordinates. ``grads`` overrides the analytic gradients
    (used to plant faults when testing the harness itself). The relative
    error of a coordinate is ``|num - ana| / max(|num|, |ana|, floor * max(1, |f|))``:
    gradients far below the floor are compared on an absolute scale, which
    keeps one-ulp noise in ``f`` from reading as a large relative error.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    rng = rng or np.random.default_rng(0)
    named = dict(params) if isinstance(params, Mapping) else {p.name: p for p in params}
    f0 = f()
    if grads is None:
        grads = backward(f0, named)
    floor = floor * max(1.0, abs(float(f0.data)))
    worst = 0.0
    for name, p in named.items():
        flat = p.data.reshape(-1)
        if flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        else:
            coords = np.arange(flat.size)
        g = np.asarray(grads[name]).reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            err = abs(num - g[i]) / max(abs(num), abs(g[i]), floor)
            worst = max(worst, err)
    return worst
