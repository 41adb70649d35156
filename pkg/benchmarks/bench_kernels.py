"""Time the compiled and NumPy kernels on forward/adjoint marches and one Gram application.

    python benchmarks/bench_kernels.py [--Nx 63 --Na 80 --T 0.5 --repeat 5]
"""
import argparse
import timeit

import numpy as np

from popctrl import backend
from popctrl.core import BirthRate, Grid, RateTable, SinBump, Survival
from popctrl.forward import Discretization


def _rates():
    beta = BirthRate(SinBump(0.5, 0.95))
    return RateTable(1.0, 0.5, 1.0, 1.0, Survival(1.0, 0.1, 1.0), Survival(1.0, 0.1, 1.0), beta,
                     SinBump(0.05, 0.95), beta.lipschitz)


def _cases(k, g, disc, kb, data):
    m0, f0, sm, sf = data
    return {
        "forward_march": lambda: k.forward_march(m0, f0, sm, sf, kb, *disc.coeffs),
        "adjoint_march": lambda: k.adjoint_march(m0, f0, kb, *disc.coeffs),
        "gram (adj+fwd)": lambda: k.forward_march(
            np.zeros_like(m0), np.zeros_like(f0), *k.adjoint_march(m0, f0, kb, *disc.coeffs)[::2], kb, *disc.coeffs),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Nx", type=int, default=63)
    ap.add_argument("--Na", type=int, default=80)
    ap.add_argument("--T", type=float, default=0.5)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    g = Grid(args.Nx, args.Na, 1.0, args.T)
    rates = _rates()
    disc = Discretization(rates, g)
    rng = np.random.default_rng(0)
    kb = disc.kernels(rng.uniform(0, 1, (g.Nx, g.Nt + 1)))
    data = (rng.normal(size=g.field_shape), rng.normal(size=g.field_shape),
            rng.normal(size=g.traj_shape), rng.normal(size=g.traj_shape))

    mods = {"python": backend.load("python")}
    try:
        mods["cython"] = backend.load("cython")
    except ImportError:
        print("compiled kernels not built; timing the fallback only")

    print(f"grid Nx={g.Nx} Na={g.Na} Nt={g.Nt}, best of {args.repeat}")
    print(f"{'kernel':<16}" + "".join(f"{name:>12}" for name in mods) + ("     speedup" if len(mods) == 2 else ""))
    for case in _cases(mods["python"], g, disc, kb, data):
        times = {}
        for name, k in mods.items():
            fn = _cases(k, g, disc, kb, data)[case]
            fn()
            n = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
            times[name] = min(timeit.repeat(fn, number=n, repeat=args.repeat)) / n
        row = f"{case:<16}" + "".join(f"{1e3 * t:>10.2f}ms" for t in times.values())
        if len(times) == 2:
            row += f"{times['python'] / times['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
