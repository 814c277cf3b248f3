"""Compiled vs numpy vertex enumeration on random bounded polytopes.

    python3 benchmarks/bench_vertex.py [--dims 2 3 4 5 6] [--rows 12] [--repeat 5]

Prints one line per dimension with both timings and the speedup, after
checking that the two kernels return the same vertex set.
"""

import argparse
import time

import numpy as np

from trirobust.kernels import compiled_enumerate_vertices, python_enumerate_vertices


def random_polytope(rng, n, m):
    # random cuts through a box keep the polytope bounded and nonempty
    A = rng.normal(size=(m, n))
    b = np.abs(A).sum(axis=1) * 0.5 + rng.uniform(0.1, 1.0, m)
    box = np.vstack([np.eye(n), -np.eye(n)])
    return np.vstack([A, box]), np.r_[b, np.ones(n), np.ones(n)]


def best_of(fn, A, b, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(A, b)
        best = min(best, time.perf_counter() - t)
    return best, out


def same_set(u, v, tol=1e-7):
    if len(u) != len(v):
        return False
    key = lambda a: a[np.lexsort(np.round(a, 6).T[::-1])]  # noqa: E731
    return bool(np.allclose(key(u), key(v), atol=tol))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dims", type=int, nargs="+", default=[2, 3, 4, 5, 6])
    p.add_argument("--rows", type=int, default=12)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if compiled_enumerate_vertices is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'n':>3} {'rows':>5} {'verts':>6} {'python_s':>10} {'cython_s':>10} {'speedup':>8}")
    for n in args.dims:
        A, b = random_polytope(rng, n, args.rows)
        tp, vp = best_of(python_enumerate_vertices, A, b, args.repeat)
        tc, vc = best_of(compiled_enumerate_vertices, A, b, args.repeat)
        if not same_set(vp, vc):
            print(f"n={n}: kernels disagree ({len(vp)} vs {len(vc)} vertices)")
            return 1
        print(f"{n:>3} {A.shape[0]:>5} {len(vp):>6} {tp:>10.4f} {tc:>10.4f} {tp / tc:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
