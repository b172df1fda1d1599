"""Compare the compiled and NumPy kernel backends on grid-sized inputs.

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R]
"""

import argparse
import timeit

import numpy as np

from twisted_nls.kernels import backend


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=10**4 * 33, help="grid values per call")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    u = (rng.standard_normal(args.size) + 1j * rng.standard_normal(args.size)) * 2.0
    rows = u.reshape(33, -1) if args.size % 33 == 0 else u[None]
    w = rng.random(rows.shape[-1])
    cases = {
        "g_m": lambda k: k.g_m(u, 1.0, 2.0, 4.0),
        "gtilde_sum": lambda k: k.gtilde_sum(rows, w, 1.0, 2.0, 4.0),
        "lp_sums(p=8/3)": lambda k: k.lp_sums(rows, w, 8.0 / 3.0),
        "lp_sums(p=2)": lambda k: k.lp_sums(rows, w, 2.0),
        "dpsi_m": lambda k: k.dpsi_m(np.abs(u), 1.0, 2.0, 4.0),
    }
    try:
        impls = {"python": backend("python"), "cython": backend("cython")}
    except ImportError:
        impls = {"python": backend("python")}
        print("compiled backend unavailable; timing the NumPy fallback only")

    print(f"{'kernel':<16}" + "".join(f"{name:>12}" for name in impls) + f"{'speedup':>10}")
    for label, fn in cases.items():
        times = {name: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
                 for name, k in impls.items()}
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<16}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
              + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
