#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-NumPy fallback.

Times the element-wise sampling/probability kernels on several array sizes
and a short end-to-end chain with each backend.

Run: python benchmarks/backend_bench.py
"""
import time

import numpy as np

from tgifa._backend import available_backends, get_kernels
from tgifa.sampler import run_chain
from tgifa.simulation import generate_dataset, generate_reference, inject_missingness
from tgifa.types import Hyperparameters, SamplerConfig


def _time(fn, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    rng = np.random.default_rng(1)
    print(f"{'kernel':<22}{'size':>10}" + "".join(
        f"{b:>14}" for b in available_backends()) + f"{'speedup':>10}")
    for size in (1_000, 25_000, 500_000):
        u = rng.random(size)
        mean = rng.normal(10.0, 2.0, size)
        sd = rng.uniform(0.5, 2.0, size)
        rows = max(1, size // 500)
        y = rng.random((rows, 500))
        f = rng.random((rows, 500))
        mu = rng.random(500)
        prec = rng.uniform(0.5, 2.0, 500)
        cases = {
            "tnorm_transform": lambda K: K.tnorm_transform(u, mean, sd, 0.0, np.inf),
            "tnorm_interval_prob": lambda K: K.tnorm_interval_prob(
                mean, sd, 0.0, 0.0, 5.0),
            "tgamma_lb1_transform": lambda K: K.tgamma_lb1_transform(
                u, 3.0, 2.0),
            "col_sq_resid": lambda K: K.col_sq_resid(y, f, mu),
            "row_sq_resid": lambda K: K.row_sq_resid(y, f, mu, prec),
        }
        for name, call in cases.items():
            times = {}
            for backend in available_backends():
                K, _ = get_kernels(backend)
                times[backend] = _time(lambda: call(K))
            cols = "".join(f"{times[b] * 1e3:>12.3f}ms" for b in times)
            speedup = (times["python"] / times["compiled"]
                       if "compiled" in times else float("nan"))
            print(f"{name:<22}{size:>10}{cols}{speedup:>9.2f}x")


def bench_chain():
    ref = generate_reference(18, 100, seed=0)
    truth, params = generate_dataset(ref, 5, seed=1)
    sim = inject_missingness(truth, seed=2, generator=params)
    hyper = Hyperparameters(k_star=5)
    config = SamplerConfig(n_iters=300, burn_in=100, thin=2, seed=3,
                           mu_update_mode="coordinate")
    print("\nend-to-end chain (n=18, p=100, k*=5, 300 iterations):")
    for backend in available_backends():
        t = _time(lambda: run_chain(sim.masked, hyper, config, backend=backend),
                  repeats=3)
        print(f"  {backend:>9}: {t:.3f}s  ({t / config.n_iters * 1e3:.2f} ms/sweep)")


if __name__ == "__main__":
    print("available backends:", ", ".join(available_backends()))
    bench_kernels()
    bench_chain()
