"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--sizes 500,1000,2000] [--repeat 3]

For each kernel and size, fills a dense M x N matrix and runs a matrix-free
direct sum with both backends, prints best-of-``repeat`` times, the speedup
and the max relative difference of the results.
"""
import argparse
import time

import numpy as np

from qfs.kernels import KernelSpec, get_backend, potential_apply, potential_matrix

CASES = [
    KernelSpec("laplace2d", 1.0, 1.0),
    KernelSpec("helmholtz2d", -10j, 1.0, k=10.0),
    KernelSpec("stokes2d", 1.0, 1.0, mu=1.0),
    KernelSpec("laplace3d", 1.0, 1.0),
]


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def configuration(spec, n, rng):
    d = spec.dim
    S = rng.standard_normal((n, d))
    Nn = rng.standard_normal((n, d))
    Nn /= np.linalg.norm(Nn, axis=1, keepdims=True)
    T = rng.standard_normal((n, d)) + 5.0
    dens = rng.standard_normal(spec.dof * n)
    return T, S, Nn, dens


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="500,1000,2000")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        get_backend("cython")
    except ImportError:
        print("compiled backend not built; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':12s} {'op':6s} {'N':>6s} {'cython s':>10s} {'python s':>10s} {'speedup':>8s} {'rel diff':>9s}")
    for spec in CASES:
        for n in [int(s) for s in args.sizes.split(",")]:
            T, S, Nn, dens = configuration(spec, n, rng)
            for op in ("fill", "apply"):
                res = {}
                for be in ("cython", "python"):
                    if op == "fill":
                        fn = lambda: potential_matrix(spec, T, S, Nn, backend=be)  # noqa: E731
                    else:
                        fn = lambda: potential_apply(spec, T, S, dens, Nn, backend=be)  # noqa: E731
                    res[be] = best_of(fn, args.repeat)
                (tc, vc), (tp, vp) = res["cython"], res["python"]
                diff = np.max(np.abs(vc - vp)) / np.max(np.abs(vp))
                print(f"{spec.pde:12s} {op:6s} {n:6d} {tc:10.4f} {tp:10.4f} {tp / tc:8.2f} {diff:9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
