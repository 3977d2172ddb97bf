"""Time the compiled and pure-numpy versions of the hot kernels.

Run with ``python benchmarks/bench_kernels.py``.  Both paths are checked
for agreement before timing; compile time is excluded by a warm-up call.
"""

import argparse
import time

import numpy as np

from fosrpower import _accel
from fosrpower.bspline import clamped_knots


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    x = np.linspace(0.0, 1.0, 1440)
    knots = clamped_knots(0.0, 1.0, 30, 3)
    draws = rng.standard_normal((2000, 300))
    scale = 1.0 / (0.5 + rng.random(300))
    pts = np.sort(rng.random(5000))
    return {
        "bspline_design (P=1440, K=30)": (
            lambda nb: _accel.bspline_design(x, knots, 3, 30, use_numba=nb)),
        "row_max_abs_scaled (2000 x 300)": (
            lambda nb: _accel.row_max_abs_scaled(draws, scale, use_numba=nb)),
        "trapezoid_weights (P=5000)": (
            lambda nb: _accel.trapezoid_weights(pts, use_numba=nb)),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    print(f"numba available: {_accel.NUMBA_AVAILABLE}; default path: "
          f"{'numba' if _accel.USE_NUMBA else 'numpy'}")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        ref = fn(False)
        if not _accel.NUMBA_AVAILABLE:
            t_np = best_of(lambda: fn(False), args.repeat)
            print(f"{name:34s} {t_np * 1e3:11.3f} {'n/a':>11s} {'n/a':>8s}")
            continue
        fast = fn(True)  # warm-up compiles
        np.testing.assert_allclose(fast, ref, rtol=1e-12, atol=1e-12)
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        print(f"{name:34s} {t_np * 1e3:11.3f} {t_nb * 1e3:11.3f} {t_np / t_nb:8.2f}x")


if __name__ == "__main__":
    main()
