"""Time the numba kernels against the numpy fallback on representative sizes.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once untimed (JIT warm-up), then the best of
``--repeat`` wall-clock timings is reported together with the max deviation
between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from refab.kernels import CONSTANT, REENTRANT, load_backend


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n_cells=200):
    dz = 1.0 / n_cells
    dt = dz / 4.0
    steps = int(round(10.0 / dt))
    rho0 = np.full(n_cells + 1, 1.5)
    influx = np.full(steps + 1, 4.0)
    influx[steps // 10:] = 60.0 / 11.0

    n_st = 2
    gains = np.tile(np.full(n_cells + 1, 0.01 * dz), (n_st, 1))
    ff = np.full((n_st, steps + 1), 1.0)

    m = 100
    q = np.ones((m + 1, m + 1))
    v_bar = 8.0 / 3.0

    rng = np.random.default_rng(0)
    n_t = 400
    source = rng.standard_normal((n_t, n_cells + 1))
    tau = np.full(n_t, dt)
    w = np.full(n_cells + 1, dz)

    return {
        "advect (N=200, T=10)": lambda b: b.advect(
            rho0, influx, dt, dz, REENTRANT, 4.0, 1.0 / 3.0, False)[3],
        "track (N=200, T=10, 2 stages)": lambda b: b.track(
            rho0, dt, dz, REENTRANT, 4.0, 1.0 / 3.0, steps, steps // 10, 4.0,
            np.array([1.5, 2.0]), np.array([4.0, 4.8]), gains, ff, np.array([2.0, np.inf]))[6],
        "adjoint (N=200, 400 steps)": lambda b: b.adjoint(
            source, np.zeros(n_cells + 1), 0.9, tau, w),
        "riccati_relax (N=100)": lambda b: b.riccati_relax(
            np.zeros((m + 1, m + 1)), q, 0.5 / (m * v_bar), 1.0, 1.0,
            1.0 / (m * v_bar), 1e-9, 100000, False)[0],
        "advect constant speed (N=200)": lambda b: b.advect(
            rho0, influx, dt, dz, CONSTANT, 4.0, 0.0, False)[3],
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    fast, slow = load_backend("numba"), load_backend("numpy")
    print(f"{'kernel':34s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s} {'max |diff|':>11s}")
    for name, run in cases().items():
        t_fast, out_fast = best_of(lambda: run(fast), args.repeat)
        t_slow, out_slow = best_of(lambda: run(slow), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_fast) - np.asarray(out_slow))))
        print(f"{name:34s} {1e3 * t_fast:11.2f} {1e3 * t_slow:11.2f} {t_slow / t_fast:9.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
