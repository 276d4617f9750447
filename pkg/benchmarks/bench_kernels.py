"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--n 1201] [--steps 1000] [--traj 2000]
"""

import argparse
import time

import numpy as np

from retroq import _kernels_py as py, qgrid, tsvf
from retroq.qgrid import Grid1D, Hamiltonian1D

try:
    from retroq import _kernels as cy
except ImportError:  # extension not built
    cy = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1201, help="grid points")
    ap.add_argument("--steps", type=int, default=1000, help="Crank-Nicolson steps")
    ap.add_argument("--batch", type=int, default=16, help="rows for the batched solve")
    ap.add_argument("--traj", type=int, default=2000, help="trajectories for RK4")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    g = Grid1D.span(-30, 30, args.n)
    h = Hamiltonian1D(g)
    psi = qgrid.make_gaussian(g, 0, 1, 1).amps
    coeffs = qgrid._cn_coeffs(h, 0.01, qgrid.FORWARD)
    batch = np.tile(psi, (args.batch, 1))

    tsv = tsvf.gaussian_pair(Grid1D.span(-20, 20, 801), 0.01)
    hi, hf = tsv.history
    ov = np.full(hi.shape[0], tsv.overlap(0.0))
    rho = tsvf.local_fields(hf, hi, tsv.h, "density", ov=ov)
    cur = tsvf.local_fields(hf, hi, tsv.h, "current", ov=ov)
    x0 = np.linspace(-3, 3, args.traj)
    rk_args = (x0, 0.0, 0.01, 100, 0.0, 0.01, rho, cur, tsv.grid.x_min, tsv.grid.dx, 1e-10)

    cases = [
        (f"cn_propagate n={args.n} steps={args.steps}",
         lambda k: k.cn_propagate(psi, *coeffs, args.steps)),
        (f"cn_propagate batch={args.batch} steps={args.steps // 10}",
         lambda k: k.cn_propagate(batch, *coeffs, args.steps // 10)),
        (f"cn_history n={args.n} steps={args.steps}",
         lambda k: k.cn_history(psi, *coeffs, args.steps)),
        (f"rk4 traj={args.traj} steps=100", lambda k: k.rk4_trajectories(*rk_args)[0]),
    ]
    print(f"{'kernel':<40} {'python s':>10} {'cython s':>10} {'speedup':>8} {'max diff':>10}")
    for name, fn in cases:
        tp, out_p = best_of(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:<40} {tp:>10.4f} {'n/a':>10}")
            continue
        tc, out_c = best_of(lambda: fn(cy), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_p) - np.asarray(out_c))))
        print(f"{name:<40} {tp:>10.4f} {tc:>10.4f} {tp / tc:>7.1f}x {diff:>10.1e}")


if __name__ == "__main__":
    main()
