"""Benchmark the compiled (numba) kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--repeats N]

Times the three hot kernels (3x3 convolution forward/backward, 2x2 max pool,
bicubic resize) on training-sized buffers for both backends. Results depend
heavily on the machine: the compiled kernels parallelize across cores, while
the numpy path leans on the BLAS behind an im2col matmul, so on a single-core
host numpy typically wins and on a many-core host numba does.
"""

import argparse
import time

import numpy as np

from attnlink.kernels import _numpy

try:
    from attnlink.kernels import _numba
except ImportError:
    _numba = None


def _time(fn, repeats):
    fn()  # warm-up (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(mod, rng):
    x = rng.normal(size=(64, 8, 32, 32)).astype(np.float32)
    w = rng.normal(size=(16, 8, 3, 3)).astype(np.float32)
    b = rng.normal(size=16).astype(np.float32)
    y = mod.conv2d_forward(x, w, b, 1, 1)
    dy = rng.normal(size=y.shape).astype(np.float32)
    xp = rng.normal(size=(64, 16, 32, 32)).astype(np.float32)
    pooled, idx = mod.maxpool2_forward(xp)
    maps = np.ascontiguousarray(rng.normal(size=(64 * 56, 16, 16)).astype(np.float32))
    return [
        ("conv2d forward  [64,8,32,32] * [16,8,3,3]",
         lambda: mod.conv2d_forward(x, w, b, 1, 1)),
        ("conv2d backward [64,8,32,32] * [16,8,3,3]",
         lambda: mod.conv2d_backward(x, w, dy, 1, 1)),
        ("maxpool2 forward [64,16,32,32]",
         lambda: mod.maxpool2_forward(xp)),
        ("maxpool2 backward [64,16,32,32]",
         lambda: mod.maxpool2_backward(pooled, idx, xp.shape)),
        ("bicubic resize [3584,16,16] -> 8x8",
         lambda: mod.bicubic_resize_stack(maps, 8, 8)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    import os
    print(f"cpu cores visible: {os.cpu_count()}")
    backends = [("numpy", _numpy)] + ([("numba", _numba)] if _numba else [])
    if _numba is None:
        print("numba backend unavailable; timing numpy only")

    results = {}
    for name, mod in backends:
        rng = np.random.default_rng(0)
        for label, fn in _cases(mod, rng):
            results.setdefault(label, {})[name] = _time(fn, args.repeats)

    width = max(len(label) for label in results)
    header = f"{'kernel':<{width}}  " + "".join(f"{n:>12}" for n, _ in backends)
    print(header)
    print("-" * len(header))
    for label, times in results.items():
        row = f"{label:<{width}}  "
        for name, _ in backends:
            row += f"{times[name] * 1e3:>10.2f}ms"
        if len(times) == 2:
            row += f"   (numba {times['numpy'] / times['numba']:.2f}x vs numpy)"
        print(row)


if __name__ == "__main__":
    main()
