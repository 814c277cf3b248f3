"""Backend-agnostic mixed-integer linear programming layer.

Everything above this module builds :class:`MilpModel` objects and calls
:func:`solve`; only the backend classes here know about an actual solver.
Two backends are registered:

``highs``
    HiGHS through ``highspy`` (default). Exposes integrality and feasibility
    tolerances, which matters for the big-M models built by the engine.
``scipy``
    HiGHS through :func:`scipy.optimize.milp`. Fewer knobs, no extra
    dependency.

The backend is picked from the ``backend`` argument, then the
``TRIROBUST_MILP_BACKEND`` environment variable, then the default.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

INF = float("inf")

CONTINUOUS = "continuous"
BINARY = "binary"
INTEGER = "integer"
_KINDS = (CONTINUOUS, BINARY, INTEGER)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"
ERROR = "error"

DEFAULT_GAP = 1e-6
ENV_BACKEND = "TRIROBUST_MILP_BACKEND"


class MilpError(RuntimeError):
    """Raised for malformed models (not for solver outcomes)."""


class MilpModel:
    """A minimization model over continuous, binary and integer columns.

    Rows are stored as sparse triplets and assembled lazily, so blocks of
    thousands of rows can be appended cheaply. ``row_lower``/``row_upper``
    carry the sense: ``>=`` rows have an infinite upper side, ``<=`` rows an
    infinite lower side and ``==`` rows equal sides.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._obj: list[np.ndarray] = []
        self._kind: list[np.ndarray] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._rlo: list[np.ndarray] = []
        self._rhi: list[np.ndarray] = []
        self.num_vars = 0
        self.num_rows = 0
        self.obj_offset = 0.0
        self._cache = None

    # -- columns -----------------------------------------------------------
    def add_vars(self, n: int, kind: str = CONTINUOUS, lb=0.0, ub=INF, obj=0.0) -> np.ndarray:
        """Append ``n`` columns and return their indices."""
        if kind not in _KINDS:
            raise MilpError(f"unknown variable kind {kind!r}")
        n = int(n)
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
        if kind == BINARY:
            lb = np.maximum(lb, 0.0)
            ub = np.minimum(ub, 1.0)
        self._lb.append(lb)
        self._ub.append(ub)
        self._obj.append(np.broadcast_to(np.asarray(obj, dtype=float), (n,)).copy())
        self._kind.append(np.full(n, _KINDS.index(kind), dtype=np.int8))
        idx = np.arange(self.num_vars, self.num_vars + n)
        self.num_vars += n
        self._cache = None
        return idx

    def set_objective(self, idx, coef) -> None:
        """Add ``coef`` to the objective coefficients of columns ``idx``."""
        obj = self.objective
        np.add.at(obj, np.asarray(idx), np.asarray(coef, dtype=float))
        self._obj = [obj]

    def fix(self, idx, values) -> None:
        lb, ub = self.lower, self.upper
        lb[np.asarray(idx)] = values
        ub[np.asarray(idx)] = values
        self._lb, self._ub = [lb], [ub]

    # -- rows --------------------------------------------------------------
    def add_rows(self, terms: Sequence[tuple], sense: str, rhs) -> np.ndarray:
        """Append rows ``sum_k M_k @ v[idx_k] (sense) rhs``.

        ``terms`` is a sequence of ``(matrix, column_indices)`` pairs; every
        matrix must have the same number of rows. Returns the row indices.
        """
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        k = rhs.shape[0]
        for mat, idx in terms:
            mat = sp.coo_matrix(mat)
            idx = np.asarray(idx, dtype=np.int64)
            if mat.shape != (k, idx.shape[0]):
                raise MilpError(f"term shape {mat.shape} does not match ({k}, {idx.shape[0]})")
            if idx.size and (idx.min() < 0 or idx.max() >= self.num_vars):
                raise MilpError("row references an undeclared variable")
            keep = mat.data != 0.0
            self._rows.append(mat.row[keep].astype(np.int64) + self.num_rows)
            self._cols.append(idx[mat.col[keep]])
            self._vals.append(mat.data[keep].astype(float))
        if sense == ">=":
            lo, hi = rhs, np.full(k, INF)
        elif sense == "<=":
            lo, hi = np.full(k, -INF), rhs
        elif sense == "==":
            lo, hi = rhs, rhs.copy()
        else:
            raise MilpError(f"unknown sense {sense!r}")
        self._rlo.append(lo)
        self._rhi.append(hi)
        out = np.arange(self.num_rows, self.num_rows + k)
        self.num_rows += k
        self._cache = None
        return out

    def add_row(self, idx, coef, sense: str, rhs: float) -> int:
        idx = np.atleast_1d(np.asarray(idx))
        coef = np.atleast_1d(np.asarray(coef, dtype=float)).reshape(1, -1)
        return int(self.add_rows([(coef, idx)], sense, [rhs])[0])

    # -- assembled views ---------------------------------------------------
    def _cat(self, parts, dtype=float):
        return np.concatenate(parts) if parts else np.zeros(0, dtype=dtype)

    @property
    def lower(self) -> np.ndarray:
        return self._cat(self._lb)

    @property
    def upper(self) -> np.ndarray:
        return self._cat(self._ub)

    @property
    def objective(self) -> np.ndarray:
        return self._cat(self._obj)

    @property
    def kinds(self) -> np.ndarray:
        return self._cat(self._kind, np.int8)

    @property
    def integrality(self) -> np.ndarray:
        """1 for binary/integer columns, 0 for continuous ones."""
        return (self.kinds != 0).astype(np.int8)

    @property
    def row_lower(self) -> np.ndarray:
        return self._cat(self._rlo)

    @property
    def row_upper(self) -> np.ndarray:
        return self._cat(self._rhi)

    def matrix(self) -> sp.csr_matrix:
        if self._cache is None:
            rows = self._cat(self._rows, np.int64)
            cols = self._cat(self._cols, np.int64)
            vals = self._cat(self._vals)
            self._cache = sp.csr_matrix((vals, (rows, cols)), shape=(self.num_rows, self.num_vars))
        return self._cache

    @property
    def num_integer(self) -> int:
        return int(np.count_nonzero(self.kinds))

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.objective @ x) + self.obj_offset

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation of bounds, rows and integrality at ``x``."""
        x = np.asarray(x, dtype=float)
        act = self.matrix() @ x if self.num_rows else np.zeros(0)
        parts = [
            np.maximum(self.lower - x, 0.0),
            np.maximum(x - self.upper, 0.0),
            np.maximum(self.row_lower - act, 0.0),
            np.maximum(act - self.row_upper, 0.0),
        ]
        ints = self.integrality.astype(bool)
        parts.append(np.abs(x[ints] - np.round(x[ints])))
        return float(max((p.max() for p in parts if p.size), default=0.0))


@dataclass
class SolveOutcome:
    status: str
    objective: float = float("nan")
    x: np.ndarray | None = None
    wall_time: float = 0.0
    bound: float = float("nan")
    gap: float = float("nan")
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class SolverOptions:
    gap: float = DEFAULT_GAP
    time_limit: float | None = None
    integrality_tol: float = 1e-6
    feasibility_tol: float = 1e-9
    seed: int = 0
    extra: dict = field(default_factory=dict)


class HighsBackend:
    name = "highs"

    def __init__(self):
        import highspy  # noqa: F401  (import errors surface at registration)

        self._hp = highspy

    def solve(self, model: MilpModel, opts: SolverOptions) -> SolveOutcome:
        hp = self._hp
        h = hp.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", int(opts.seed))
        h.setOptionValue("mip_rel_gap", float(opts.gap))
        h.setOptionValue("mip_abs_gap", 1e-10)
        h.setOptionValue("mip_feasibility_tolerance", float(opts.integrality_tol))
        h.setOptionValue("primal_feasibility_tolerance", float(opts.feasibility_tol))
        h.setOptionValue("dual_feasibility_tolerance", float(opts.feasibility_tol))
        if opts.time_limit is not None:
            h.setOptionValue("time_limit", float(opts.time_limit))
        is_mip = model.num_integer > 0
        if not is_mip:
            h.setOptionValue("solver", "simplex")
        for key, val in opts.extra.items():
            h.setOptionValue(key, val)

        lp = hp.HighsLp()
        lp.num_col_ = model.num_vars
        lp.num_row_ = model.num_rows
        lp.col_cost_ = model.objective
        lp.col_lower_ = _highs_inf(model.lower)
        lp.col_upper_ = _highs_inf(model.upper)
        lp.row_lower_ = _highs_inf(model.row_lower)
        lp.row_upper_ = _highs_inf(model.row_upper)
        a = model.matrix().tocsc()
        a.sort_indices()
        lp.a_matrix_.format_ = hp.MatrixFormat.kColwise
        lp.a_matrix_.start_ = a.indptr.astype(np.int32)
        lp.a_matrix_.index_ = a.indices.astype(np.int32)
        lp.a_matrix_.value_ = a.data
        lp.a_matrix_.num_col_ = model.num_vars
        lp.a_matrix_.num_row_ = model.num_rows
        if is_mip:
            kinds = model.kinds
            lp.integrality_ = [
                hp.HighsVarType.kInteger if k else hp.HighsVarType.kContinuous for k in kinds
            ]
        t0 = time.perf_counter()
        h.passModel(lp)
        h.run()
        status = h.getModelStatus()
        # presolve reductions can misclassify big-M models at tight integrality
        # tolerances; infeasibility verdicts are confirmed without presolve
        if status == hp.HighsModelStatus.kUnboundedOrInfeasible or (
            is_mip and status == hp.HighsModelStatus.kInfeasible
        ):
            h.setOptionValue("presolve", "off")
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
        wall = time.perf_counter() - t0
        S = hp.HighsModelStatus
        info = h.getInfo()
        if status == S.kOptimal:
            x = np.array(h.getSolution().col_value, dtype=float)
            obj = float(info.objective_function_value) + model.obj_offset
            if is_mip:
                bound = float(info.mip_dual_bound) + model.obj_offset
                gap = float(info.mip_gap)
            else:
                bound, gap = obj, 0.0
            return SolveOutcome(OPTIMAL, obj, x, wall, bound, gap)
        if status == S.kInfeasible:
            return SolveOutcome(INFEASIBLE, wall_time=wall)
        if status in (S.kUnbounded, S.kUnboundedOrInfeasible):
            return SolveOutcome(UNBOUNDED, wall_time=wall)
        if status in (S.kTimeLimit, S.kIterationLimit, S.kSolutionLimit, S.kInterrupt):
            return SolveOutcome(LIMIT, wall_time=wall, message=h.modelStatusToString(status))
        return SolveOutcome(ERROR, wall_time=wall, message=h.modelStatusToString(status))


def _highs_inf(v: np.ndarray) -> np.ndarray:
    out = np.array(v, dtype=float)
    out[out == INF] = 1e30
    out[out == -INF] = -1e30
    return out


class ScipyBackend:
    name = "scipy"

    def solve(self, model: MilpModel, opts: SolverOptions) -> SolveOutcome:
        from scipy.optimize import Bounds, LinearConstraint, milp

        # scipy exposes no tolerance knobs; only presolve follows ``extra``
        options = {"mip_rel_gap": float(opts.gap), "presolve": opts.extra.get("presolve", "on") != "off"}
        if opts.time_limit is not None:
            options["time_limit"] = float(opts.time_limit)
        cons = []
        if model.num_rows:
            cons.append(LinearConstraint(model.matrix(), model.row_lower, model.row_upper))
        t0 = time.perf_counter()
        try:
            res = milp(
                model.objective,
                integrality=model.integrality,
                bounds=Bounds(model.lower, model.upper),
                constraints=cons,
                options=options,
            )
        except Exception as exc:  # solver crash, not a modelling verdict
            return SolveOutcome(ERROR, wall_time=time.perf_counter() - t0, message=str(exc))
        wall = time.perf_counter() - t0
        if res.status == 0:
            obj = float(res.fun) + model.obj_offset
            bound = getattr(res, "mip_dual_bound", None)
            bound = obj if bound is None else float(bound) + model.obj_offset
            gap = getattr(res, "mip_gap", None)
            return SolveOutcome(OPTIMAL, obj, np.asarray(res.x), wall, bound, 0.0 if gap is None else float(gap))
        if res.status == 2:
            return SolveOutcome(INFEASIBLE, wall_time=wall, message=res.message)
        if res.status == 3:
            return SolveOutcome(UNBOUNDED, wall_time=wall, message=res.message)
        if res.status == 1:
            return SolveOutcome(LIMIT, wall_time=wall, message=res.message)
        return SolveOutcome(ERROR, wall_time=wall, message=res.message)


_BACKENDS = {"highs": HighsBackend, "scipy": ScipyBackend}
_instances: dict[str, object] = {}


def available_backends() -> list[str]:
    names = []
    for name in _BACKENDS:
        try:
            get_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def get_backend(name: str | None = None):
    name = name or os.environ.get(ENV_BACKEND) or "highs"
    if name not in _BACKENDS:
        raise MilpError(f"unknown MILP backend {name!r}; choose from {sorted(_BACKENDS)}")
    if name not in _instances:
        try:
            _instances[name] = _BACKENDS[name]()
        except ImportError:
            if name == "highs":
                logger.warning("highspy not importable, falling back to scipy backend")
                return get_backend("scipy")
            raise
    return _instances[name]


def solve(
    model: MilpModel,
    gap: float = DEFAULT_GAP,
    time_limit: float | None = None,
    backend: str | None = None,
    **kwargs,
) -> SolveOutcome:
    """Solve ``model`` (minimization) and return a status-accurate outcome."""
    opts = SolverOptions(gap=gap, time_limit=time_limit, **kwargs)
    out = get_backend(backend).solve(model, opts)
    logger.debug("%s: %s obj=%.6g in %.3fs", model.name, out.status, out.objective, out.wall_time)
    return out


def build_model(spec: dict) -> MilpModel:
    """Build a model from a plain description.

    ``spec`` has ``variables`` (list of dicts with ``kind``, ``lb``, ``ub``,
    ``obj``) and ``constraints`` (list of dicts with ``coefs`` mapping
    variable position to coefficient, ``sense`` and ``rhs``).
    """
    model = MilpModel(spec.get("name", "model"))
    for var in spec.get("variables", []):
        model.add_vars(
            1,
            kind=var.get("kind", CONTINUOUS),
            lb=var.get("lb", 0.0),
            ub=var.get("ub", INF),
            obj=var.get("obj", 0.0),
        )
    for con in spec.get("constraints", []):
        coefs = con["coefs"]
        idx = [int(k) for k in coefs]
        model.add_row(idx, [coefs[k] for k in coefs], con["sense"], con["rhs"])
    model.obj_offset = float(spec.get("offset", 0.0))
    return model

