"""Benchmark the compiled pair-table kernels against the NumPy fallback.

Run:  python benchmarks/bench_pairops.py [--sizes 512 1024 2048 4096]

Prints per-operation timings for both backends and the speedup. The
compiled backend is what the solver loop hits; the fallback keeps the
package usable where no C compiler is available.
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np


def _load_backends():
    from fplap import _pairops_np

    backends = {"numpy": _pairops_np}
    try:
        backends["cython"] = importlib.import_module("fplap._pairops_cy")
    except ImportError:
        print("compiled extension not available; benchmarking the fallback only")
    return backends


def _time(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", type=int, nargs="+", default=[512, 1024, 2048, 4096])
    parser.add_argument("--p", type=float, nargs="+", default=[2.0, 1.5, 2.7])
    args = parser.parse_args()

    backends = _load_backends()
    rng = np.random.default_rng(0)
    ops = ("pair_power_sum", "pair_grad", "pair_pairing")

    for n in args.sizes:
        x = rng.uniform(-1.0, 1.0, (n, 1))
        d = np.abs(x - x.T) + np.eye(n)
        W = d**-1.5
        np.fill_diagonal(W, 0.0)
        W = np.ascontiguousarray(W)
        u = rng.normal(0.0, 1.0, n)
        v = rng.normal(0.0, 1.0, n)
        for p in args.p:
            print(f"n={n} p={p}")
            for op in ops:
                times = {}
                for name, mod in backends.items():
                    fn = getattr(mod, op)
                    extra = (u, v, p) if op == "pair_pairing" else (u, p)
                    times[name] = _time(fn, W, *extra)
                line = "  ".join(f"{k}: {t * 1e3:8.2f} ms" for k, t in times.items())
                if "cython" in times:
                    line += f"  speedup: {times['numpy'] / times['cython']:6.1f}x"
                print(f"  {op:16s} {line}")


if __name__ == "__main__":
    main()
