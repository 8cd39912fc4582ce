"""Compare the compiled and pure-numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py [--n 64 128 256]``.  Each row
reports the best-of-repeats wall time per call.  The last column times a full
IF-RK4 step, where the FFTs (shared by both backends) dominate.
"""
import argparse
import timeit

import numpy as np

import importlib

from cns2d import kernels
from cns2d.integrate import constrained_stepper
from cns2d.spectral import GridSpec, random_smooth_field


def _time(fn, repeat=5, number=20):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


_integrate = importlib.import_module("cns2d.integrate")
_operators = importlib.import_module("cns2d.operators")


def bench_grid(n, backends):
    grid = GridSpec(n)
    u = random_smooth_field(3, 3.0, grid).coeffs
    rng = np.random.default_rng(0)
    phys = rng.standard_normal((2, n, n))
    dphys = rng.standard_normal((2, 2, n, n))
    e = np.exp(-0.01 * grid.ksq)
    rows = {}
    for be in backends:
        kernels_of = {
            "leray_dealias": lambda: be.leray_dealias(u, grid.k1, grid.k2, grid.inv_ksq, grid.mask),
            "advection": lambda: be.advection(phys, dphys),
            "norm_sums": lambda: be.norm_sums(u, grid.ksq, grid.weight),
            "lawson_combine": lambda: be.lawson_combine(u, u, u, u, u, e, e, 1e-3),
        }
        rows[be.name] = {k: _time(f) for k, f in kernels_of.items()}
        # the solver modules bind the backend at import; swap it for the step timing
        prev = _integrate._kern, _operators._kern
        _integrate._kern = _operators._kern = be
        try:
            stepper = constrained_stepper(grid, 1e-3, 0.1)
            rows[be.name]["full_step"] = _time(lambda: stepper.step(u), number=5)
        finally:
            _integrate._kern, _operators._kern = prev
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, nargs="+", default=[64, 128, 256])
    args = p.parse_args(argv)
    backends = [kernels.python_backend]
    if kernels.cython_backend is not None:
        backends.append(kernels.cython_backend)
    else:
        print("compiled extension not built; timing the python backend only")
    names = ["leray_dealias", "advection", "norm_sums", "lawson_combine", "full_step"]
    print(f"{'n':>5} {'backend':>8} " + " ".join(f"{k:>15}" for k in names))
    for n in args.n:
        rows = bench_grid(n, backends)
        for be, r in rows.items():
            print(f"{n:>5} {be:>8} " + " ".join(f"{r[k] * 1e6:>13.1f}us" for k in names))
        if len(rows) == 2:
            sp = {k: rows["python"][k] / rows["cython"][k] for k in names}
            print(f"{n:>5} {'speedup':>8} " + " ".join(f"{sp[k]:>14.2f}x" for k in names))


if __name__ == "__main__":
    main()
