"""Brute-force verification tools for small instances.

Nothing here is used by the engine. Tolerances are fixed at 1e-7 and are
deliberately not shared with the engine's settings.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp

from . import kernels
from .instance import (
    CompactInstance,
    Polytope,
    evaluate_recourse_lp,
    realize_ddu_polytope,
)

ORACLE_TOL = 1e-7
MAX_VERTEX_DIM = 8
MAX_ENUMERATION = 100_000


class OracleGuardError(ValueError):
    """Problem too large for brute force."""


class EmptyPolytopeError(ValueError):
    pass


def enumerate_polytope_vertices(p: Polytope) -> np.ndarray:
    """All vertices of ``p`` as rows, deduplicated at 1e-9."""
    if p.dim > MAX_VERTEX_DIM:
        raise OracleGuardError(f"vertex enumeration limited to dimension {MAX_VERTEX_DIM}, got {p.dim}")
    return kernels.enumerate_vertices(p.A, p.b, 1e-9, 1e-9)


def _rank(rows: np.ndarray, tol: float) -> int:
    if not rows.size:
        return 0
    norms = np.abs(rows).max(axis=1, keepdims=True)
    return int(np.linalg.matrix_rank(rows / np.maximum(norms, 1e-300), tol=tol))


def active_set(A, b, point, tol: float = ORACLE_TOL) -> np.ndarray:
    slack = b - A @ point
    return np.flatnonzero(np.abs(slack) <= tol * np.maximum(1.0, np.abs(b)))


def check_vertex(p: Polytope, point, tol: float = ORACLE_TOL) -> bool:
    """True iff ``point`` is a basic feasible point of ``p``.

    Raises ``ValueError`` if the point is infeasible.
    """
    point = np.asarray(point, dtype=float)
    if not p.contains(point, tol):
        raise ValueError("point is not feasible for the polytope")
    act = active_set(p.A, p.b, point, tol)
    return _rank(p.A[act], tol) >= p.dim


def is_extreme_dual(B, d, lam, tol: float = ORACLE_TOL) -> bool:
    """Rank test for ``lam`` as an extreme point of {lam >= 0 : B^T lam <= d}.

    Works on sparse blocks without densifying the whole polyhedron: only
    active rows are materialized.
    """
    lam = np.asarray(lam, dtype=float)
    Bt = sp.csr_matrix(B).T.tocsr()
    act_val = Bt @ lam
    if np.any(lam < -tol) or np.any(act_val > d + tol * np.maximum(1.0, np.abs(d))):
        raise ValueError("dual point is not feasible")
    rows = np.flatnonzero(np.abs(d - act_val) <= tol * np.maximum(1.0, np.abs(d)))
    zero = np.flatnonzero(np.abs(lam) <= tol)
    m = lam.shape[0]
    # columns where lam is zero are fixed; the remaining block must be full column rank
    free = np.setdiff1d(np.arange(m), zero)
    if not free.size:
        return True
    sub = Bt[rows][:, free].toarray()
    return _rank(sub, tol) == free.size


def worst_case_enumeration(inst: CompactInstance, s: int, x, backend=None):
    """max over vertices xi of Xi_s(x) of the recourse LP value.

    Returns ``(value, argmax vertex)``.
    """
    poly = realize_ddu_polytope(inst, s, x)
    verts = enumerate_polytope_vertices(poly)
    if not len(verts):
        raise EmptyPolytopeError(f"uncertainty set of scenario {s} is empty at this x")
    best, arg = -math.inf, None
    for v in verts:
        val, _ = evaluate_recourse_lp(inst, s, x, v, backend=backend)
        if val > best:
            best, arg = val, v
    return best, arg


class DualVertexTable:
    """Recourse values through the vertices of the dual polyhedron.

    For a feasible recourse LP, min{d.y : B y >= r, y >= 0} equals the
    maximum of r.lam over the vertices of {lam >= 0 : B^T lam <= d}, so once
    those vertices are enumerated every evaluation is a matrix product.
    """

    def __init__(self, blk):
        Bt = blk.B.T.toarray()
        m = Bt.shape[1]
        if m > 12 or math.comb(Bt.shape[0] + m, m) > 2_000_000:
            raise OracleGuardError("dual polyhedron too large for enumeration")
        A = np.vstack([Bt, -np.eye(m)])
        b = np.concatenate([blk.d, np.zeros(m)])
        self.vertices = kernels.enumerate_vertices(A, b, 1e-9, 1e-9)
        if not len(self.vertices):
            raise OracleGuardError("dual polyhedron has no vertex")
        self.blk = blk

    def values(self, rhs: np.ndarray) -> np.ndarray:
        """Recourse value for each row of ``rhs`` (k, m_y)."""
        return (np.atleast_2d(rhs) @ self.vertices.T).max(axis=1)


def enumerate_upper_level(inst: CompactInstance, x_bounds) -> np.ndarray:
    """Integer points of the box ``x_bounds`` satisfying A x <= b."""
    lo = np.array([b[0] for b in x_bounds], dtype=int)
    hi = np.array([b[1] for b in x_bounds], dtype=int)
    if lo.shape[0] != inst.n_x:
        raise ValueError("x_bounds must give one (lo, hi) pair per entry of x")
    hi[: inst.n_binary] = np.minimum(hi[: inst.n_binary], 1)
    lo = np.maximum(lo, 0)
    size = int(np.prod(np.maximum(hi - lo + 1, 0), dtype=float))
    if size > MAX_ENUMERATION:
        raise OracleGuardError(f"upper-level box holds {size} points, limit {MAX_ENUMERATION}")
    pts = [np.array(p, dtype=float) for p in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi)))]
    return np.array([p for p in pts if inst.x_feasible(p)]).reshape(-1, inst.n_x)


def exhaustive_trilevel_solve(inst: CompactInstance, x_bounds, method: str = "auto", backend=None):
    """Global optimum by enumerating every feasible x and every vertex xi.

    ``method="dual"`` evaluates recourse values through dual vertices,
    ``"lp"`` solves one recourse LP per (x, xi) pair; ``"auto"`` tries the
    dual table first. Returns ``(x, objective)``; ``(None, inf)`` if no x is
    feasible.
    """
    xs = enumerate_upper_level(inst, x_bounds)
    tables = None
    if method in ("auto", "dual"):
        try:
            tables = [DualVertexTable(blk) for blk in inst.scenarios]
        except OracleGuardError:
            if method == "dual":
                raise
    best_x, best = None, math.inf
    for x in xs:
        total = float(inst.c @ x)
        for s, blk in enumerate(inst.scenarios):
            if tables is None:
                q, _ = worst_case_enumeration(inst, s, x, backend=backend)
            else:
                verts = enumerate_polytope_vertices(realize_ddu_polytope(inst, s, x))
                if not len(verts):
                    raise EmptyPolytopeError(f"uncertainty set of scenario {s} is empty")
                rhs = (blk.f - blk.G @ x)[None, :] - verts @ blk.E.T.toarray()
                q = float(tables[s].values(rhs).max())
            total += blk.pi * q
        if total < best - 1e-12:
            best, best_x = total, x
    return best_x, best


def dense_lp_min(c, A_ge, b_ge) -> tuple[float, np.ndarray]:
    """min c.y s.t. A_ge y >= b_ge, y >= 0 by basic-solution enumeration.

    Independent of any LP solver; only for a handful of variables. Raises
    ``ValueError`` when infeasible; unboundedness is not detected.
    """
    c = np.asarray(c, dtype=float)
    A = np.vstack([-np.asarray(A_ge, dtype=float), -np.eye(c.shape[0])])
    b = np.concatenate([-np.asarray(b_ge, dtype=float), np.zeros(c.shape[0])])
    if math.comb(A.shape[0], c.shape[0]) > 2_000_000:
        raise OracleGuardError("too many bases")
    verts = kernels.python_enumerate_vertices(A, b, 1e-9, 1e-9)
    if not len(verts):
        raise ValueError("LP infeasible")
    vals = verts @ c
    k = int(np.argmin(vals))
    return float(vals[k]), verts[k]


def iteration_bound(inst: CompactInstance) -> int:
    """Upper bound C(n_xi + m_xi, m_xi)^|S| on outer iterations."""
    total = 1
    for blk in inst.scenarios:
        total *= math.comb(blk.n_xi + blk.m_xi, blk.m_xi)
    return total


def standard_form(H, h_x) -> tuple[np.ndarray, np.ndarray]:
    """Slack-augmented equality form [H I] (xi, s) = h_x."""
    H = np.asarray(H.toarray() if sp.issparse(H) else H, dtype=float)
    return np.hstack([H, np.eye(H.shape[0])]), np.asarray(h_x, dtype=float)


def basic_solution(A_std, rhs, basis) -> np.ndarray | None:
    """Basic solution of A_std z = rhs for column set ``basis``; None if singular."""
    Ab = A_std[:, list(basis)]
    if abs(np.linalg.det(Ab)) < 1e-12:
        return None
    z = np.zeros(A_std.shape[1])
    z[list(basis)] = np.linalg.solve(Ab, rhs)
    return z


def optimal_basis(A_std, rhs, cost, tol: float = ORACLE_TOL):
    """Brute-force optimal basis of max cost.z s.t. A_std z = rhs, z >= 0."""
    m, n = A_std.shape
    best, best_b = -math.inf, None
    for cols in itertools.combinations(range(n), m):
        z = basic_solution(A_std, rhs, cols)
        if z is None or np.any(z < -tol):
            continue
        val = float(cost @ z)
        if val > best + tol:
            best, best_b = val, cols
    return best_b, best
