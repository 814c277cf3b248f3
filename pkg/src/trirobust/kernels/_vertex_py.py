"""Numpy fallback for the vertex enumeration kernel.

Same contract as the compiled ``_vertex.enumerate_vertices``: all n-subsets
of rows are solved in batches, singular subsets are dropped by a condition
test on row-equilibrated matrices.
"""

from itertools import combinations, islice

import numpy as np

_CHUNK = 4096


def enumerate_vertices(A, b, feas_tol=1e-9, dedup_tol=1e-9, pivot_tol=1e-10):
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    m, n = A.shape
    if n == 0 or m < n:
        return np.zeros((0, n))
    scale = np.abs(A).max(axis=1)
    usable = scale > 0
    As = np.where(usable[:, None], A / np.where(usable, scale, 1.0)[:, None], 0.0)
    bs = np.where(usable, b / np.where(usable, scale, 1.0), 0.0)
    slack = feas_tol * np.maximum(1.0, np.abs(b))
    found: list[np.ndarray] = []
    combos = combinations(range(m), n)
    while True:
        chunk = np.array(list(islice(combos, _CHUNK)), dtype=np.intp)
        if chunk.size == 0:
            break
        chunk = chunk[usable[chunk].all(axis=1)]
        if not len(chunk):
            continue
        mats = As[chunk]
        sv = np.linalg.svd(mats, compute_uv=False)
        ok = sv[:, -1] > pivot_tol * np.maximum(sv[:, 0], 1e-300)
        if not ok.any():
            continue
        z = np.linalg.solve(mats[ok], bs[chunk[ok]][:, :, None])[:, :, 0]
        feas = np.all(z @ A.T <= b + slack, axis=1)
        for pt in z[feas]:
            tol = dedup_tol * max(1.0, float(np.abs(pt).max()))
            if not any(np.abs(q - pt).max() <= tol for q in found):
                found.append(pt)
    return np.array(found).reshape(-1, n)
