#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times full training runs at ablation-grid scale for both architectures and
a gathered forward+backward step, printing a small table with speedups.

    python benchmarks/bench_backends.py [--rounds 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from phenolab.nn import (
    Hyper,
    available_backends,
    fcn_stress_spec,
    get_backend,
    lstm_stress_spec,
    train,
)


def _time(fn, rounds: int) -> float:
    fn()  # warm-up
    best = float("inf")
    for _ in range(rounds):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(rounds: int) -> None:
    rng = np.random.default_rng(0)
    workloads = []

    x = rng.standard_normal((1800, 84))
    y = rng.integers(0, 2, 1800)
    spec = fcn_stress_spec(84, 2, seed=1)
    for bs in (32, 128):
        hyper = Hyper(epochs=10, batch_size=bs)
        workloads.append(
            (
                f"fcn train n=1800 f=84 batch={bs} epochs=10",
                lambda b, s=spec, h=hyper: train(s, x, y, h, backend=b),
            )
        )

    x3 = rng.standard_normal((1000, 5, 84))
    y3 = rng.integers(0, 2, 1000)
    spec3 = lstm_stress_spec(84, 2, seed=1)
    hyper3 = Hyper(epochs=3, batch_size=32)
    workloads.append(
        (
            "lstm train n=1000 f=84 batch=32 epochs=3",
            lambda b: train(spec3, x3, y3, hyper3, backend=b),
        )
    )

    names = available_backends()
    print(f"backends: {', '.join(names)}")
    header = f"{'workload':45s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}"
    print(header)
    print("-" * len(header))
    for label, fn in workloads:
        times = {}
        for name in names:
            backend = get_backend(name)
            times[name] = _time(lambda: fn(backend), rounds)
        row = f"{label:45s}" + "".join(f"{times[n]:12.4f}" for n in names)
        if "cython" in times and "python" in times:
            row += f"{times['python'] / times['cython']:9.2f}x"
        print(row)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, default=3, help="timing repetitions")
    args = parser.parse_args()
    bench(args.rounds)


if __name__ == "__main__":
    main()
