"""Time the compiled and numpy time-stepping kernels on the same run.

    python benchmarks/bench_kernels.py --k 40 --t-end 0.05 --repeat 3
"""
import argparse
import time

import numpy as np

from hslab import kernels
from hslab.scenarios import builtin
from hslab.solver import run


def time_backend(sc, k, t_end, backend, repeat):
    grid = sc.grid()
    rho0 = sc.initial(grid)
    cfg = sc.config(k, t_end=t_end, n_outputs=5, backend=backend)
    best, traj = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = run(sc.spec, grid, rho0, cfg)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="fig1")
    ap.add_argument("--k", type=float, default=40.0)
    ap.add_argument("--t-end", type=float, default=0.05)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args(argv)

    sc = builtin(a.scenario)
    results = {}
    for be in kernels.available_backends():
        secs, traj = time_backend(sc, a.k, a.t_end, be, a.repeat)
        steps = traj.snapshots[-1].steps
        results[be] = (secs, traj)
        print(f"{be:>7}: {secs:8.3f} s  {steps} steps  {1e6 * secs / max(steps, 1):8.2f} us/step")
    if len(results) == 2:
        c, p = results["cython"], results["python"]
        diff = float(np.max(np.abs(c[1].snapshots[-1].rho - p[1].snapshots[-1].rho)))
        print(f"speedup {p[0] / c[0]:.1f}x, max |rho_cython - rho_python| = {diff:.2e}")
    else:
        print("compiled kernel not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
