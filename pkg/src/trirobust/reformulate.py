"""Single-level reformulations used by the decomposition.

* the dual feasible set Pi_s = {lam >= 0 : B_s^T lam <= d_s},
* big-M linearization of complementarity pairs,
* the OU block: KKT conditions of  max_{xi in Xi_s(x)} e.xi  with
  e = -E_s^T lam, parametric in x,
* the subproblem max_{xi in Xi_s(x)} min_{y in Y_s(x, xi)} d_s.y as a MILP,
  either through the KKT conditions of the inner LP (``form="kkt"``) or
  through the OU conditions of the uncertainty LP (``form="ou"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import milp
from .instance import CompactInstance, Polytope, ScenarioBlock

PI_TOL = 1e-7


class PreconditionError(ValueError):
    pass


@dataclass
class AffineBlock:
    """Vector-valued affine expression ``sum_k M_k v[idx_k] + const``."""

    terms: list
    const: np.ndarray

    def value(self, sol: np.ndarray) -> np.ndarray:
        out = np.array(self.const, dtype=float)
        for mat, idx in self.terms:
            out = out + mat @ sol[idx]
        return out

    @property
    def size(self) -> int:
        return self.const.shape[0]


def _eye(n: int) -> sp.csr_matrix:
    return sp.identity(n, format="csr")


@dataclass
class ComplementarityBlock:
    """Pairs ``first_i >= 0, second_i >= 0, first_i * second_i = 0``."""

    binaries: np.ndarray
    first: AffineBlock
    second: AffineBlock
    M: float

    def max_product(self, sol: np.ndarray) -> float:
        if not self.first.size:
            return 0.0
        return float(np.max(np.abs(self.first.value(sol) * self.second.value(sol))))

    def max_magnitude(self, sol: np.ndarray) -> float:
        if not self.first.size:
            return 0.0
        return float(max(np.max(self.first.value(sol)), np.max(self.second.value(sol))))


def mirrored_rows(*blocks) -> list[tuple[int, int]]:
    """Pairs (i, j) of rows with row_j = -row_i in every block.

    Blocks are matrices or vectors sharing the row count; such pairs encode
    an equality as two inequalities.
    """
    mats = [sp.csr_matrix(b.reshape(-1, 1) if np.ndim(b) == 1 else b) for b in blocks]
    m = mats[0].shape[0]
    keys = []
    for i in range(m):
        key = []
        for k, A in enumerate(mats):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            key.extend((k, int(c), round(float(v), 12)) for c, v in zip(A.indices[lo:hi], A.data[lo:hi]) if v)
        keys.append(tuple(sorted(key)))
    seen, pairs = {}, []
    for i, key in enumerate(keys):
        if not key:
            continue
        neg = tuple(sorted((k, c, -v) for k, c, v in key))
        j = seen.pop(neg, None)
        if j is not None:
            pairs.append((j, i))
        else:
            seen[key] = i
    return pairs


def linearize_complementarity(
    model: milp.MilpModel, first: AffineBlock, second: AffineBlock, M: float, exclusive=()
) -> ComplementarityBlock:
    """Add ``first <= M w`` and ``second <= M (1 - w)`` with fresh binaries w.

    ``exclusive`` lists index pairs with w_i + w_j <= 1. For the two halves
    of an equality both ``second`` entries are zero at every feasible
    point, so the row only removes the redundant ray first_i = first_j.
    """
    if not M > 0:
        raise ValueError(f"big-M must be positive, got {M}")
    k = first.size
    if second.size != k:
        raise ValueError("complementarity blocks differ in length")
    w = model.add_vars(k, kind=milp.BINARY)
    if k:
        model.add_rows(list(first.terms) + [(-M * _eye(k), w)], "<=", -first.const)
        model.add_rows(list(second.terms) + [(M * _eye(k), w)], "<=", M - second.const)
    for i, j in exclusive:
        model.add_row(w[[i, j]], [1.0, 1.0], "<=", 1.0)
    return ComplementarityBlock(w, first, second, float(M))


@dataclass
class DualPolyhedron:
    """{lam >= 0 : Bt lam <= d}; independent of x and xi by construction."""

    Bt: sp.csr_matrix
    d: np.ndarray

    @property
    def num_vars(self) -> int:
        return self.Bt.shape[1]

    @property
    def num_rows(self) -> int:
        return self.Bt.shape[0]

    def contains(self, lam, tol: float = PI_TOL) -> bool:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.num_vars,) or np.any(lam < -tol):
            return False
        return bool(np.all(self.Bt @ lam <= self.d + tol * np.maximum(1.0, np.abs(self.d))))

    def as_polytope(self) -> Polytope:
        return Polytope.nonnegative(self.Bt, self.d)


def dual_feasible_set(inst: CompactInstance, s: int) -> DualPolyhedron:
    blk = inst.scenarios[s]
    return DualPolyhedron(sp.csr_matrix(blk.B.T), blk.d.copy())


def psi_objective(blk: ScenarioBlock, lam) -> np.ndarray:
    """Objective of max_xi (-E xi).lam, i.e. the vector -E^T lam."""
    return -(blk.E.T @ np.asarray(lam, dtype=float))


@dataclass
class OuBlock:
    xi: np.ndarray
    theta: np.ndarray
    primal_slack: ComplementarityBlock
    dual_slack: ComplementarityBlock
    objective: np.ndarray

    @property
    def binaries(self) -> np.ndarray:
        return np.concatenate([self.primal_slack.binaries, self.dual_slack.binaries])

    @property
    def complementarities(self) -> list[ComplementarityBlock]:
        return [self.primal_slack, self.dual_slack]


def build_ou_block(
    model: milp.MilpModel,
    inst: CompactInstance,
    s: int,
    lam,
    M: float,
    x_idx=None,
    x_value=None,
    objective=None,
) -> OuBlock:
    """Append the OU rows for a fixed dual point ``lam`` to ``model``.

    The block is parametric in x: pass ``x_idx`` (columns of x in ``model``)
    or a fixed ``x_value``. ``objective`` overrides the Psi objective
    -E^T lam (used for tie-breaking among alternative optima).
    """
    blk = inst.scenarios[s]
    lam = np.asarray(lam, dtype=float)
    if not dual_feasible_set(inst, s).contains(lam):
        raise PreconditionError("lambda_hat is not in the dual feasible set")
    e = psi_objective(blk, lam) if objective is None else np.asarray(objective, dtype=float)
    H, Ht = blk.H, sp.csr_matrix(blk.H.T)
    xi = model.add_vars(blk.n_xi)
    theta = model.add_vars(blk.m_xi)
    if x_idx is not None:
        x_terms = [(blk.F, x_idx)]
        h = blk.h
    else:
        x_terms = []
        h = blk.h - blk.F @ np.asarray(x_value, dtype=float)
    model.add_rows([(H, xi)] + x_terms, "<=", h)
    model.add_rows([(Ht, theta)], ">=", e)
    neg_x = [(-mat, idx) for mat, idx in x_terms]
    primal = linearize_complementarity(
        model,
        AffineBlock([(_eye(blk.m_xi), theta)], np.zeros(blk.m_xi)),
        AffineBlock([(-H, xi)] + neg_x, np.asarray(h, dtype=float)),
        M,
        exclusive=mirrored_rows(blk.H, blk.F, blk.h),
    )
    dual = linearize_complementarity(
        model,
        AffineBlock([(_eye(blk.n_xi), xi)], np.zeros(blk.n_xi)),
        AffineBlock([(Ht, theta)], -e),
        M,
    )
    return OuBlock(xi, theta, primal, dual, e)


@dataclass
class SpMilp:
    model: milp.MilpModel
    form: str
    xi: np.ndarray
    lam: np.ndarray
    y: np.ndarray | None = None
    theta: np.ndarray | None = None
    complementarities: list = field(default_factory=list)
    M: float = 0.0

    @property
    def num_binaries(self) -> int:
        return sum(c.binaries.size for c in self.complementarities)

    def value(self, out: milp.SolveOutcome) -> float:
        """Max-min value encoded by a solved model (its objective is negated)."""
        return -out.objective


def build_sp_milp(inst: CompactInstance, s: int, x_hat, M: float, form: str = "kkt") -> SpMilp:
    """Single-level MILP of the scenario subproblem at a fixed investment."""
    blk = inst.scenarios[s]
    x_hat = np.asarray(x_hat, dtype=float)
    if not inst.x_feasible(x_hat, tol=1e-6):
        raise PreconditionError("x_hat violates the upper-level constraints")
    h_x = blk.h - blk.F @ x_hat
    r_x = blk.f - blk.G @ x_hat
    if form == "kkt":
        return _sp_kkt(blk, h_x, r_x, M)
    if form == "ou":
        return _sp_ou(blk, h_x, r_x, M)
    raise ValueError(f"unknown subproblem form {form!r}")


def _sp_kkt(blk: ScenarioBlock, h_x, r_x, M) -> SpMilp:
    model = milp.MilpModel("sp-kkt")
    Bt = sp.csr_matrix(blk.B.T)
    xi = model.add_vars(blk.n_xi)
    y = model.add_vars(blk.n_y, obj=-blk.d)
    lam = model.add_vars(blk.m_y)
    model.add_rows([(blk.H, xi)], "<=", h_x)
    model.add_rows([(blk.B, y), (blk.E, xi)], ">=", r_x)
    model.add_rows([(Bt, lam)], "<=", blk.d)
    c1 = linearize_complementarity(
        model,
        AffineBlock([(_eye(blk.m_y), lam)], np.zeros(blk.m_y)),
        AffineBlock([(blk.B, y), (blk.E, xi)], -r_x),
        M,
        exclusive=mirrored_rows(blk.B, blk.G, blk.E, blk.f),
    )
    c2 = linearize_complementarity(
        model,
        AffineBlock([(_eye(blk.n_y), y)], np.zeros(blk.n_y)),
        AffineBlock([(-Bt, lam)], blk.d.copy()),
        M,
    )
    return SpMilp(model, "kkt", xi, lam, y=y, complementarities=[c1, c2], M=M)


def _sp_ou(blk: ScenarioBlock, h_x, r_x, M) -> SpMilp:
    # max (f - Gx).lam + (h - Fx).theta over lam in Pi and (xi, theta) in OU(x, lam);
    # the bilinear term (-E xi).lam equals (h - Fx).theta at any KKT point.
    model = milp.MilpModel("sp-ou")
    Bt = sp.csr_matrix(blk.B.T)
    Ht = sp.csr_matrix(blk.H.T)
    Et = sp.csr_matrix(blk.E.T)
    xi = model.add_vars(blk.n_xi)
    lam = model.add_vars(blk.m_y, ub=M, obj=-r_x)
    theta = model.add_vars(blk.m_xi, obj=-h_x)
    model.add_rows([(Bt, lam)], "<=", blk.d)
    model.add_rows([(blk.H, xi)], "<=", h_x)
    model.add_rows([(Ht, theta), (Et, lam)], ">=", np.zeros(blk.n_xi))
    c1 = linearize_complementarity(
        model,
        AffineBlock([(_eye(blk.m_xi), theta)], np.zeros(blk.m_xi)),
        AffineBlock([(-blk.H, xi)], np.asarray(h_x, dtype=float)),
        M,
        exclusive=mirrored_rows(blk.H, blk.F, blk.h),
    )
    c2 = linearize_complementarity(
        model,
        AffineBlock([(_eye(blk.n_xi), xi)], np.zeros(blk.n_xi)),
        AffineBlock([(Ht, theta), (Et, lam)], np.zeros(blk.n_xi)),
        M,
    )
    return SpMilp(model, "ou", xi, lam, theta=theta, complementarities=[c1, c2], M=M)


# -- LP polish helpers ------------------------------------------------------

def solve_dual_lp(blk: ScenarioBlock, rhs, backend=None):
    """max rhs.lam over Pi by simplex; returns (value, vertex lam)."""
    model = milp.MilpModel("dual-lp")
    lam = model.add_vars(blk.m_y, obj=-np.asarray(rhs, dtype=float))
    model.add_rows([(sp.csr_matrix(blk.B.T), lam)], "<=", blk.d)
    out = milp.solve(model, backend=backend)
    if not out.optimal:
        return out.status, None
    return -out.objective, out.x[lam]


def solve_psi_lp(blk: ScenarioBlock, h_x, e, backend=None):
    """max e.xi over {xi >= 0 : H xi <= h_x} by simplex; (value, vertex xi)."""
    model = milp.MilpModel("psi-lp")
    xi = model.add_vars(blk.n_xi, obj=-np.asarray(e, dtype=float))
    model.add_rows([(blk.H, xi)], "<=", h_x)
    out = milp.solve(model, backend=backend)
    if not out.optimal:
        return out.status, None
    return -out.objective, out.x[xi]


def solve_psi_dual_lp(blk: ScenarioBlock, h_x, e, backend=None):
    """min h_x.theta over {theta >= 0 : H^T theta >= e}; (value, vertex theta)."""
    model = milp.MilpModel("psi-dual-lp")
    theta = model.add_vars(blk.m_xi, obj=np.asarray(h_x, dtype=float))
    model.add_rows([(sp.csr_matrix(blk.H.T), theta)], ">=", np.asarray(e, dtype=float))
    out = milp.solve(model, backend=backend)
    if not out.optimal:
        return out.status, None
    return out.objective, out.x[theta]


def active_rows(A: np.ndarray, b: np.ndarray, z: np.ndarray, tol: float = 1e-7) -> np.ndarray:
    slack = b - A @ z
    return np.flatnonzero(np.abs(slack) <= tol * np.maximum(1.0, np.abs(b)))


def vertex_basis(A: np.ndarray, b: np.ndarray, z: np.ndarray, tol: float = 1e-7):
    """Indices of n linearly independent active rows at ``z`` or None."""
    n = A.shape[1]
    basis: list[int] = []
    for i in active_rows(A, b, z, tol):
        trial = basis + [int(i)]
        if np.linalg.matrix_rank(A[trial] / np.maximum(np.abs(A[trial]).max(axis=1, keepdims=True), 1e-300), tol=tol) == len(trial):
            basis = trial
            if len(basis) == n:
                return tuple(basis)
    return None


def basis_tiebreak(A: np.ndarray, basis, scale: float) -> np.ndarray:
    """Objective shift that makes the vertex of ``basis`` the unique optimum.

    If z* maximizes e.z over {A z <= b} then e = sum_active mu_i a_i with
    mu >= 0; adding ``scale * sum_{i in basis} a_i`` gives every basis
    normal a strictly positive weight, so z* becomes the unique maximizer.
    """
    rows = A[list(basis)]
    norms = np.maximum(np.abs(rows).max(axis=1, keepdims=True), 1e-300)
    return scale * (rows / norms).sum(axis=0)


def lexicographic_tiebreak(n: int, scale: float) -> np.ndarray:
    return scale * np.arange(1, n + 1, dtype=float)
