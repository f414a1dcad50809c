import os
import subprocess
import sys

import numpy as np
import pytest

from lgmtrack import kernels

BACKENDS = kernels.implementations()


def loop_forward(x, w, b):
    n, c_in, t = x.shape
    c_out, _, k = w.shape
    r = k // 2
    out = np.zeros((n, c_out, t))
    for i in range(n):
        for o in range(c_out):
            for s in range(t):
                acc = b[o]
                for c in range(c_in):
                    for j in range(k):
                        if 0 <= s + j - r < t:
                            acc += w[o, c, j] * x[i, c, s + j - r]
                out[i, o, s] = acc
    return out


def case(rng, dtype, k):
    x = rng.normal(size=(3, 2, 11)).astype(dtype)
    w = rng.normal(size=(4, 2, k)).astype(dtype)
    b = rng.normal(size=(4,)).astype(dtype)
    g = rng.normal(size=(3, 4, 11)).astype(dtype)
    return x, w, b, g


def test_compiled_backend_built():
    assert "cython" in BACKENDS, "compiled extension missing; run `pip install -e . --no-build-isolation`"


@pytest.mark.parametrize("name", sorted(BACKENDS))
@pytest.mark.parametrize("dtype, tol", [(np.float64, 1e-12), (np.float32, 1e-4)])
@pytest.mark.parametrize("k", [1, 3, 5])
def test_kernels_match_loop_oracle(name, dtype, tol, k, rng):
    impl = BACKENDS[name]
    x, w, b, g = case(rng, dtype, k)
    out = np.empty((3, 4, 11), dtype=dtype)
    impl.conv1d_forward(x, w, b, out)
    np.testing.assert_allclose(out, loop_forward(x.astype(float), w.astype(float), b.astype(float)), atol=tol)
    # adjoint identities: <conv(x), g> = <x, conv^T g> and d<conv(x), g>/dw
    dx = np.empty_like(x)
    impl.conv1d_backward_input(g, w, dx)
    dw, db = np.empty_like(w), np.empty_like(b)
    impl.conv1d_backward_weight(g, x, dw, db)
    x64, w64, g64 = x.astype(float), w.astype(float), g.astype(float)
    nobias = loop_forward(x64, w64, np.zeros(4))
    assert np.sum(nobias * g64) == pytest.approx(np.sum(x64 * dx), abs=tol * 100)
    for idx in [(0, 0, 0), (3, 1, k - 1), (2, 0, k // 2)]:
        e = np.zeros_like(w64)
        e[idx] = 1.0
        assert dw[idx] == pytest.approx(np.sum(loop_forward(x64, e, np.zeros(4)) * g64), abs=tol * 100)
    np.testing.assert_allclose(db, g64.sum(axis=(0, 2)), atol=tol * 10)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
def test_backends_agree(rng):
    x, w, b, g = case(rng, np.float64, 3)
    a, c = np.empty((3, 4, 11)), np.empty((3, 4, 11))
    BACKENDS["numpy"].conv1d_forward(x, w, b, a)
    BACKENDS["cython"].conv1d_forward(x, w, b, c)
    np.testing.assert_allclose(a, c, atol=1e-12)


def test_env_var_forces_fallback():
    env = dict(os.environ, LGMTRACK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from lgmtrack import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "numpy"
