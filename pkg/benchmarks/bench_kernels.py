"""Time the temporal convolution kernels on every available backend.

    python benchmarks/bench_kernels.py [--repeat 50]
"""
import argparse
import timeit

import numpy as np

from lgmtrack import kernels

SHAPES = [(8, 4, 64, 3), (32, 16, 64, 3), (64, 32, 65, 5)]


def bench(impl, shape, dtype, repeat):
    n, c, t, k = shape
    rng = np.random.default_rng(0)
    x = rng.normal(size=(n, c, t)).astype(dtype)
    w = rng.normal(size=(c, c, k)).astype(dtype)
    b = rng.normal(size=(c,)).astype(dtype)
    g = rng.normal(size=(n, c, t)).astype(dtype)
    out, dx, dw, db = np.empty_like(x), np.empty_like(x), np.empty_like(w), np.empty_like(b)

    def step():
        impl.conv1d_forward(x, w, b, out)
        impl.conv1d_backward_input(g, w, dx)
        impl.conv1d_backward_weight(g, x, dw, db)

    step()
    return min(timeit.repeat(step, number=1, repeat=repeat)) * 1e6


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()
    impls = kernels.implementations()
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'shape (N,C,T,K)':<20}{'dtype':<9}" + "".join(f"{name + ' us':>14}" for name in impls) + f"{'speedup':>10}")
    for shape in SHAPES:
        for dtype in (np.float32, np.float64):
            us = {name: bench(mod, shape, dtype, args.repeat) for name, mod in impls.items()}
            ratio = us["numpy"] / us["cython"] if "cython" in us else float("nan")
            print(f"{str(shape):<20}{np.dtype(dtype).name:<9}" + "".join(f"{v:>14.1f}" for v in us.values())
                  + f"{ratio:>9.2f}x")


if __name__ == "__main__":
    main()
