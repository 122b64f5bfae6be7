"""Time the compiled kernels against the pure-numpy fallback.

Runs the three hot operations on realistic shapes and prints a small table.
The compiled module must be built (pip install -e . does it); the fallback is
always available.

Usage:
    python benchmarks/bench_kernels.py [--entries 20000] [--repeats 5]
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np


def best_of(repeats: int, fn) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run(module, entries: int, repeats: int) -> dict[str, float]:
    rng = np.random.default_rng(11)
    results: dict[str, float] = {}

    matrix = rng.random((entries, 9664), dtype=np.float32)
    query = rng.random(9664, dtype=np.float32)
    results[f"l1_scan {entries}x9664"] = best_of(
        repeats, lambda: module.l1_scan(matrix, query)
    )

    maps = rng.random((512, 112, 112), dtype=np.float32)
    weights = rng.integers(0, 256, size=(112, 112)).astype(np.float64)
    results["weighted_means 512x112x112"] = best_of(
        repeats, lambda: module.weighted_channel_means(maps, weights)
    )

    last = rng.random((512, 7, 7), dtype=np.float32)
    masks = (rng.random((512, 7, 7)) > 0.5).astype(np.uint8)
    results["masked_means 512x7x7"] = best_of(
        repeats, lambda: module.masked_channel_means(last, masks)
    )
    return results


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--entries", type=int, default=20000,
                        help="index rows for the scan benchmark")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = {}
    try:
        backends["compiled"] = importlib.import_module("sigdesc._kernels")
    except ImportError:
        print("compiled backend not built; showing fallback only")
    backends["python"] = importlib.import_module("sigdesc._kernels_py")

    timings = {name: run(mod, args.entries, args.repeats)
               for name, mod in backends.items()}
    ops = list(next(iter(timings.values())))
    width = max(len(op) for op in ops)
    header = "op".ljust(width) + "".join(f"  {name:>12}" for name in timings)
    if len(timings) == 2:
        header += "  " + "speedup".rjust(9)
    print(header)
    for op in ops:
        row = op.ljust(width)
        for name in timings:
            row += f"  {timings[name][op] * 1e3:>10.2f}ms"
        if len(timings) == 2:
            ratio = timings["python"][op] / timings["compiled"][op]
            row += f"  {ratio:>8.2f}x"
        print(row)


if __name__ == "__main__":
    main()
