#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs each hot kernel (conv forward/backward, 2x2 max-pool, boosting split
scan) on representative shapes with both implementations and prints a
timing table.  Correctness of the pair is covered by the test suite; this
only measures throughput.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import importlib
import time

import numpy as np

from flowpiclab.nn import kernels_numpy

try:
    _kernels = importlib.import_module("flowpiclab.nn._kernels")
except ImportError:
    _kernels = None


def timeit(fn, repeats):
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    # conv shapes from the two CNN stages at 32x32 input, batch 32
    x1 = rng.standard_normal((32, 1, 32, 32), dtype=np.float32)
    w1 = rng.standard_normal((6, 1, 5, 5), dtype=np.float32)
    x2 = rng.standard_normal((32, 6, 14, 14), dtype=np.float32)
    w2 = rng.standard_normal((16, 6, 5, 5), dtype=np.float32)
    gy1 = rng.standard_normal((32, 6, 28, 28), dtype=np.float32)
    gy2 = rng.standard_normal((32, 16, 10, 10), dtype=np.float32)
    pool_in = rng.standard_normal((32, 6, 28, 28), dtype=np.float32)

    # split scan: 2000 samples x 256 presorted feature columns
    order = np.argsort(rng.standard_normal((2000, 256)), axis=0, kind="stable")
    xs = np.take_along_axis(rng.standard_normal((2000, 256)), order, axis=0)
    xs.sort(axis=0)
    gs = np.take_along_axis(
        np.repeat(rng.standard_normal((2000, 1)), 256, axis=1), order, axis=0)
    hs = np.abs(gs) + 0.1

    b1 = np.zeros(6, dtype=np.float32)
    b2 = np.zeros(16, dtype=np.float32)

    def conv(mod):
        mod.conv2d_forward(x1, w1, b1)
        mod.conv2d_forward(x2, w2, b2)

    def conv_bwd(mod):
        mod.conv2d_backward(x1, w1, gy1)
        mod.conv2d_backward(x2, w2, gy2)

    def pool(mod):
        out, arg = mod.maxpool2_forward(pool_in)
        mod.maxpool2_backward(out, arg, pool_in.shape[2], pool_in.shape[3])

    def scan(mod):
        mod.split_scan(xs, gs, hs, 1.0)

    return [("conv2d forward", conv), ("conv2d backward", conv_bwd),
            ("maxpool 2x2 fwd+bwd", pool), ("boost split scan", scan)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"{'kernel':<22}{'numpy (ms)':>12}{'compiled (ms)':>15}{'speedup':>9}")
    for name, fn in cases():
        t_np = timeit(lambda: fn(kernels_numpy), args.repeats) * 1e3
        if _kernels is None:
            print(f"{name:<22}{t_np:>12.2f}{'n/a':>15}{'n/a':>9}")
            continue
        t_cy = timeit(lambda: fn(_kernels), args.repeats) * 1e3
        print(f"{name:<22}{t_np:>12.2f}{t_cy:>15.2f}{t_np / t_cy:>8.1f}x")
    if _kernels is None:
        print("\ncompiled extension not available; showing numpy fallback only")


if __name__ == "__main__":
    main()
