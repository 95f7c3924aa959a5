"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from multiteach import _backend
from multiteach import targets as tg
from multiteach.engine import TeachingConfig, run_teaching
from multiteach.kernels import Grid, KernelSpec


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_step(mod, size, steps):
    g = Grid.image(size, size)
    inv_b2 = KernelSpec.in_pixels(2.0, g).inv_b2
    rng = np.random.default_rng(0)
    f, t = rng.normal(size=g.size), rng.normal(size=g.size)
    centers = rng.integers(g.size, size=steps)

    def run():
        for c in centers:
            mod.kernel_step(f, t, g.coords, int(c), 1e-3, inv_b2)

    return run


def bench_teach(mod, iters):
    vf = tg.bundled_image("rgb32.ppm").to_vector()
    init = tg.zero_init(vf.grids)
    cfg = TeachingConfig(max_iter=iters, epsilon=1e-9, kernel=KernelSpec.in_pixels(2.0, vf[0].grid))
    return lambda: run_teaching(cfg, vf, init, backend=mod)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = ["python"]
    try:
        _backend.get_backend("cython")
        names.insert(0, "cython")
    except ImportError:
        print("compiled backend unavailable; timing the Python fallback only")
    cases = [
        ("kernel_step 32x32 x2000", lambda m: bench_step(m, 32, 2000)),
        ("kernel_step 128x128 x500", lambda m: bench_step(m, 128, 500)),
        ("teach rgb32 GFT 2000 iters", lambda m: bench_teach(m, 2000)),
    ]
    print(f"{'case':<30}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) == 2 else ""))
    for label, make in cases:
        secs = [best_of(make(_backend.get_backend(n)), args.repeat) for n in names]
        row = f"{label:<30}" + "".join(f"{s * 1e3:>10.1f}ms" for s in secs)
        if len(secs) == 2:
            row += f"{secs[1] / secs[0]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
