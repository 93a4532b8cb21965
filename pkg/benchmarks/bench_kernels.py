"""Time the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--sizes 256 1024 4096] [--repeat 5]

Reports the best-of-``repeat`` wall time for one right-hand-side
evaluation, one implicit diffusion solve and a fixed stretch of time
integration, for each backend and grid size.
"""

import argparse
import time

import numpy as np

from bdcomp import kernels
from bdcomp.kinetics import coexistence
from bdcomp.presets import spike_params


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation for numba
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(n, repeat):
    p = spike_params()
    e = coexistence(p)
    x = (np.arange(n) + 0.5) * p.L / n
    u0 = e.u * (1 + 0.3 * np.cos(2 * np.pi * x / p.L))
    v0 = e.v * (1 + 0.3 * np.cos(2 * np.pi * x / p.L))
    prm, ph = kernels.pack_params(p, p.L / n), kernels.pack_phi(p.phi)
    rows = {}
    for name in ("numpy", "numba"):
        if name == "numba" and not kernels.HAVE_NUMBA:
            continue
        be = kernels.get_backend(name)

        def integrate():
            u, v = u0.copy(), v0.copy()
            be.advance(u, v, prm, ph, 0.0, 1.0, 0.25)

        rows[name] = (best_of(lambda: be.rhs(u0, v0, prm, ph), repeat),
                      best_of(lambda: be.solve_diffusion(0.5, u0), repeat),
                      best_of(integrate, repeat))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'n':>6} {'backend':>8} {'rhs [ms]':>10} {'solve [ms]':>11} {'t=1 run [s]':>12}")
    for n in args.sizes:
        rows = bench(n, args.repeat)
        for name, (r, s, i) in rows.items():
            print(f"{n:>6} {name:>8} {1e3 * r:>10.4f} {1e3 * s:>11.4f} {i:>12.4f}")
        if "numba" in rows:
            print(f"{'':>6} {'speedup':>8} {rows['numpy'][0] / rows['numba'][0]:>10.1f} "
                  f"{rows['numpy'][1] / rows['numba'][1]:>11.1f} {rows['numpy'][2] / rows['numba'][2]:>12.1f}")


if __name__ == "__main__":
    main()
