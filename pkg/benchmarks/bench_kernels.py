"""Benchmark the two critic-ensemble kernel backends.

Runs the ensemble forward pass, the per-critic MSE gradient, and the
mean-Q input gradient with both the numba and the pure-numpy backends on a
training-shaped workload, and prints the per-call times side by side.

Usage: python3 benchmarks/bench_kernels.py [--m 10] [--batch 320]
       [--hidden 64] [--state 6] [--action 2] [--iters 200]
"""

import argparse
import importlib
import os
import sys
import time

import numpy as np


def load_backend(flag):
    os.environ["SPRED_NUMBA"] = flag
    import spred.kernels
    importlib.reload(spred.kernels)
    return spred.kernels


def bench(kernels, x, y, stacks, iters):
    # warm up (numba JIT compilation happens here)
    kernels.ens_forward(x, *stacks)
    kernels.ens_mse_grads(x, y, *stacks)
    kernels.ens_mean_input_grad(x, *stacks)
    out = {}
    for name, fn in (
        ("forward", lambda: kernels.ens_forward(x, *stacks)),
        ("mse_grads", lambda: kernels.ens_mse_grads(x, y, *stacks)),
        ("input_grad", lambda: kernels.ens_mean_input_grad(x, *stacks)),
    ):
        t0 = time.perf_counter()
        for _ in range(iters):
            fn()
        out[name] = (time.perf_counter() - t0) / iters
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--batch", type=int, default=320)
    ap.add_argument("--hidden", type=int, default=64)
    ap.add_argument("--state", type=int, default=6)
    ap.add_argument("--action", type=int, default=2)
    ap.add_argument("--iters", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    din = args.state + args.action
    h, m, n = args.hidden, args.m, args.batch
    stacks = (
        rng.normal(0, 0.1, (m, din, h)), rng.normal(0, 0.1, (m, h)),
        rng.normal(0, 0.1, (m, h, h)), rng.normal(0, 0.1, (m, h)),
        rng.normal(0, 0.1, (m, h, 1)), rng.normal(0, 0.1, (m, 1)),
    )
    x = np.ascontiguousarray(rng.normal(0, 1, (n, din)))
    y = rng.normal(-10, 5, n)

    results = {}
    for flag, label in (("0", "numpy"), ("1", "numba")):
        kern = load_backend(flag)
        if label == "numba" and kern.BACKEND != "numba":
            print("numba backend unavailable; skipping", file=sys.stderr)
            continue
        results[label] = bench(kern, x, y, stacks, args.iters)

    names = ("forward", "mse_grads", "input_grad")
    print(f"m={m} batch={n} hidden={h} in_dim={din} iters={args.iters}")
    print(f"{'kernel':<12}" + "".join(f"{lbl:>12}" for lbl in results))
    for name in names:
        row = f"{name:<12}"
        for lbl in results:
            row += f"{results[lbl][name] * 1e3:>10.3f}ms"
        print(row)
    if {"numpy", "numba"} <= results.keys():
        total_np = sum(results["numpy"][n] for n in names)
        total_nb = sum(results["numba"][n] for n in names)
        print(f"speedup (numpy/numba): {total_np / total_nb:.2f}x")


if __name__ == "__main__":
    main()
