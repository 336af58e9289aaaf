"""Compare the numba and numpy kernels on representative sizes.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import itertools
import time

import numpy as np

from steinlab import _kernels, qmat


def _time(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    n = 5
    maps = np.stack([qmat.basis_permutation_map((2,) * n, p) for p in itertools.permutations(range(n))])
    X = qmat.random_state([2] * n, rng).matrix
    yield "perm_average (n=5, 120 perms)", "perm_average", (np.ascontiguousarray(X), maps.astype(np.int64))
    P = rng.dirichlet(np.ones(200_000))
    Q = rng.dirichlet(np.ones(200_000))
    yield "np_fill (200k outcomes)", "np_fill", (P, Q, 0.7)
    lam = np.sort(rng.uniform(1e-3, 1.0, 256))
    yield "log_divided_differences (256)", "log_divided_differences", (lam,)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.NUMBA is None:
        print("numba unavailable; only the numpy path can run")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for label, key, a in cases(rng):
        t_np = _time(_kernels.NUMPY[key], a, args.repeat)
        if _kernels.NUMBA is None:
            print(f"{label:34s} {1e3 * t_np:12.3f} {'-':>12s} {'-':>8s}")
            continue
        t_nb = _time(_kernels.NUMBA[key], a, args.repeat)
        print(f"{label:34s} {1e3 * t_np:12.3f} {1e3 * t_nb:12.3f} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
