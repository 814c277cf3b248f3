"""Compact trilevel problem representation and primitive evaluations.

A :class:`CompactInstance` describes

    min_{x in X}  c.x + sum_s pi_s max_{xi in Xi_s(x)} min_{y in Y_s(x, xi)} d_s.y

with X = {x binary/integer : A x <= b}, Xi_s(x) = {xi >= 0 : H xi <= h - F x}
and Y_s(x, xi) = {y >= 0 : B y >= f - G x - E xi}.

Matrix blocks are kept as CSR matrices; vectors are dense.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import milp

PROB_TOL = 1e-9


class RecourseError(RuntimeError):
    """The lower-level LP is infeasible or unbounded for the given data."""

    def __init__(self, status: str, scenario: int):
        super().__init__(f"recourse LP of scenario {scenario} is {status}")
        self.status = status
        self.scenario = scenario


def _csr(m, shape=None) -> sp.csr_matrix:
    if m is None:
        return sp.csr_matrix(shape)
    out = sp.csr_matrix(m, dtype=float)
    out.eliminate_zeros()
    return out


@dataclass(frozen=True, eq=False)
class ScenarioBlock:
    pi: float
    d: np.ndarray
    f: np.ndarray
    h: np.ndarray
    H: sp.csr_matrix
    F: sp.csr_matrix
    B: sp.csr_matrix
    G: sp.csr_matrix
    E: sp.csr_matrix

    @classmethod
    def from_arrays(cls, pi, d, f, h, H, F, B, G, E) -> "ScenarioBlock":
        return cls(
            float(pi),
            np.asarray(d, dtype=float).ravel(),
            np.asarray(f, dtype=float).ravel(),
            np.asarray(h, dtype=float).ravel(),
            _csr(H),
            _csr(F),
            _csr(B),
            _csr(G),
            _csr(E),
        )

    @property
    def n_xi(self) -> int:
        return self.H.shape[1]

    @property
    def m_xi(self) -> int:
        return self.H.shape[0]

    @property
    def n_y(self) -> int:
        return self.B.shape[1]

    @property
    def m_y(self) -> int:
        return self.B.shape[0]

    def recourse_rhs(self, x, xi) -> np.ndarray:
        """f - G x - E xi."""
        return self.f - self.G @ np.asarray(x, dtype=float) - self.E @ np.asarray(xi, dtype=float)


@dataclass(frozen=True, eq=False)
class CompactInstance:
    c: np.ndarray
    upper_A: sp.csr_matrix
    upper_b: np.ndarray
    n_binary: int
    n_integer: int
    scenarios: tuple[ScenarioBlock, ...]
    # rows of A flagged here are equalities A_i x = b_i
    upper_eq: np.ndarray = field(default=None)
    name: str = "instance"

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float).ravel())
        object.__setattr__(self, "upper_A", _csr(self.upper_A))
        object.__setattr__(self, "upper_b", np.asarray(self.upper_b, dtype=float).ravel())
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        eq = self.upper_eq
        eq = np.zeros(self.upper_b.shape[0], dtype=bool) if eq is None else np.asarray(eq, dtype=bool)
        object.__setattr__(self, "upper_eq", eq)

    @property
    def n_x(self) -> int:
        return self.c.shape[0]

    @property
    def num_scenarios(self) -> int:
        return len(self.scenarios)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([blk.pi for blk in self.scenarios])

    def x_feasible(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_x,) or np.any(x < -tol):
            return False
        nb = self.n_binary
        if np.any(np.abs(x - np.round(x)) > tol) or np.any(x[:nb] > 1 + tol):
            return False
        if not self.upper_b.size:
            return True
        act = self.upper_A @ x
        ok_le = act <= self.upper_b + tol
        ok_eq = np.abs(act - self.upper_b) <= tol
        return bool(np.all(np.where(self.upper_eq, ok_eq, ok_le)))

    def replace(self, **changes) -> "CompactInstance":
        return dataclasses.replace(self, **changes)


@dataclass
class Violation:
    block: str
    message: str

    def __str__(self) -> str:
        return f"{self.block}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, block: str, message: str) -> None:
        self.violations.append(Violation(block, message))

    def __str__(self) -> str:
        if self.ok:
            return "OK"
        return "\n".join(str(v) for v in self.violations)


def validate_instance(inst: CompactInstance) -> ValidationReport:
    """Collect every dimension, probability and finiteness problem."""
    rep = ValidationReport()
    n_x = inst.c.shape[0]
    if inst.n_binary < 0 or inst.n_integer < 0 or inst.n_binary + inst.n_integer != n_x:
        rep.add("x", f"n_binary + n_integer = {inst.n_binary + inst.n_integer} but len(c) = {n_x}")
    if inst.upper_A.shape[1] != n_x:
        rep.add("upper_A", f"has {inst.upper_A.shape[1]} columns, expected n_x = {n_x}")
    if inst.upper_A.shape[0] != inst.upper_b.shape[0]:
        rep.add("upper_b", f"length {inst.upper_b.shape[0]} != rows of upper_A {inst.upper_A.shape[0]}")
    if inst.upper_eq.shape != inst.upper_b.shape:
        rep.add("upper_eq", "length differs from upper_b")
    _finite(rep, "c", inst.c)
    _finite(rep, "upper_A", inst.upper_A.data)
    _finite(rep, "upper_b", inst.upper_b)
    if not inst.scenarios:
        rep.add("scenarios", "at least one scenario is required")
    total = 0.0
    for s, blk in enumerate(inst.scenarios):
        tag = f"scenarios[{s}]"
        if not (0.0 < blk.pi <= 1.0):
            rep.add(f"{tag}.pi", f"probability {blk.pi} outside (0, 1]")
        total += blk.pi
        m_xi, n_xi = blk.H.shape
        m_y, n_y = blk.B.shape
        expect = {
            "F": (blk.F.shape, (m_xi, n_x)),
            "G": (blk.G.shape, (m_y, n_x)),
            "E": (blk.E.shape, (m_y, n_xi)),
            "d": (blk.d.shape, (n_y,)),
            "f": (blk.f.shape, (m_y,)),
            "h": (blk.h.shape, (m_xi,)),
        }
        for key, (got, want) in expect.items():
            if got != want:
                rep.add(f"{tag}.{key}", f"shape {got}, expected {want}")
        for key in ("d", "f", "h"):
            _finite(rep, f"{tag}.{key}", getattr(blk, key))
        for key in ("H", "F", "B", "G", "E"):
            _finite(rep, f"{tag}.{key}", getattr(blk, key).data)
        if s > 0:
            first = inst.scenarios[0]
            if (n_xi, n_y) != (first.n_xi, first.n_y):
                rep.add(tag, "n_xi/n_y differ from scenario 0")
    if inst.scenarios and abs(total - 1.0) > PROB_TOL:
        rep.add("scenarios.pi", f"probabilities sum to {total!r}, expected 1")
    return rep


def _finite(rep: ValidationReport, block: str, arr) -> None:
    arr = np.asarray(arr)
    if arr.size and not np.all(np.isfinite(arr)):
        rep.add(block, f"{int(np.count_nonzero(~np.isfinite(arr)))} non-finite entries")


def recourse_model(blk: ScenarioBlock, rhs: np.ndarray) -> tuple[milp.MilpModel, np.ndarray]:
    model = milp.MilpModel("recourse")
    y = model.add_vars(blk.n_y, obj=blk.d)
    model.add_rows([(blk.B, y)], ">=", rhs)
    return model, y


def solve_recourse_rhs(blk: ScenarioBlock, rhs, scenario: int = 0, backend=None):
    """min d.y s.t. B y >= rhs, y >= 0. Returns ``(value, y)``."""
    model, y = recourse_model(blk, np.asarray(rhs, dtype=float))
    out = milp.solve(model, backend=backend)
    if not out.optimal:
        raise RecourseError(out.status, scenario)
    return out.objective, out.x[y]


def evaluate_recourse_lp(inst: CompactInstance, s: int, x, xi, backend=None):
    """Lower-level LP value and minimizer at fixed ``(x, xi)``.

    ``xi`` need not lie in the uncertainty set. Raises :class:`RecourseError`
    when the LP is infeasible or unbounded.
    """
    blk = inst.scenarios[s]
    return solve_recourse_rhs(blk, blk.recourse_rhs(x, xi), s, backend)


@dataclass
class Polytope:
    """Halfspace description ``A z <= b`` with nonnegativity rows included.

    The first ``n_structural`` rows are the problem rows; the remaining
    rows are ``-z_j <= 0``.
    """

    A: np.ndarray
    b: np.ndarray
    n_structural: int

    @classmethod
    def nonnegative(cls, A, b) -> "Polytope":
        A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
        b = np.asarray(b, dtype=float).ravel()
        n = A.shape[1]
        return cls(np.vstack([A, -np.eye(n)]), np.concatenate([b, np.zeros(n)]), A.shape[0])

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains(self, z, tol: float = 1e-7) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(self.A @ z <= self.b + tol * np.maximum(1.0, np.abs(self.b))))

    def same_as(self, other: "Polytope") -> bool:
        return (
            self.A.shape == other.A.shape
            and np.array_equal(self.A, other.A)
            and np.array_equal(self.b, other.b)
        )


def ddu_rhs(inst: CompactInstance, s: int, x) -> np.ndarray:
    blk = inst.scenarios[s]
    return blk.h - blk.F @ np.asarray(x, dtype=float)


def realize_ddu_polytope(inst: CompactInstance, s: int, x) -> Polytope:
    """Xi_s(x) as explicit halfspaces. Emptiness is not checked."""
    blk = inst.scenarios[s]
    return Polytope.nonnegative(blk.H, ddu_rhs(inst, s, x))


def strip_decision_dependence(inst: CompactInstance) -> CompactInstance:
    """Copy of ``inst`` with every F_s zeroed (the static-uncertainty model)."""
    scen = tuple(
        dataclasses.replace(blk, F=sp.csr_matrix(blk.F.shape)) for blk in inst.scenarios
    )
    return inst.replace(scenarios=scen)
