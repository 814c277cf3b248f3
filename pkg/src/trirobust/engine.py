"""Parametric column-and-constraint generation.

The master problem (MP) is a relaxation of the single-level reformulation:
for every scenario it carries one block per collected dual extreme point
lam_hat. A block holds an OU block (fresh xi, theta and complementarity
binaries that force xi to be a maximizer of Psi_s(x, lam_hat) for whatever
x the master picks) together with either

* a recourse replica ``eta_s >= d.y,  B y + G x + E xi >= f``  (``pccg``), or
* a single dual hyperplane ``eta_s >= (f - G x - E xi).lam_hat``  (``bccg``).

Subproblems evaluate the max-min value at the master's x through a big-M
MILP and then polish the returned point with two LPs, so that the cut data
(xi_hat, lam_hat) are exact vertices of their polyhedra.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import milp
from .instance import CompactInstance, RecourseError, evaluate_recourse_lp, validate_instance
from .reformulate import (
    basis_tiebreak,
    build_ou_block,
    build_sp_milp,
    lexicographic_tiebreak,
    psi_objective,
    solve_dual_lp,
    solve_psi_dual_lp,
    solve_psi_lp,
    vertex_basis,
)

logger = logging.getLogger(__name__)

CONVERGED = "converged"
ITER_LIMIT = "iter_limit"
INFEASIBLE = "infeasible"
STALLED = "stalled"

HYGIENE_RATIO = 0.99
M_CAP = 1e13
RETRY_INTEGRALITY_TOL = 1e-6


class BigMWarning(UserWarning):
    pass


class SubproblemInfeasible(RuntimeError):
    def __init__(self, scenario: int):
        super().__init__(f"uncertainty set of scenario {scenario} is empty at the trial x")
        self.scenario = scenario


class BackendFailure(RuntimeError):
    pass


@dataclass
class EngineConfig:
    epsilon: float = 1e-3
    max_iter: int = 100
    mode: str = "pccg"
    eta_floor: float = -1e12
    parallel_sp: bool = False
    M_mp: float = 1e6
    M_sp: float = 1e6
    milp_gap: float = 1e-6
    integrality_tol: float = 1e-7
    solver_options: dict = field(default_factory=dict)
    time_limit_s: float | None = None
    backend: str | None = None
    sp_form: str = "kkt"
    tiebreak: str = "basis"
    seed_x: np.ndarray | None = None
    master_check: str = "always"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if not math.isfinite(self.eta_floor):
            raise ValueError("eta_floor must be finite")
        if self.mode not in ("pccg", "bccg"):
            raise ValueError(f"mode must be 'pccg' or 'bccg', got {self.mode!r}")
        if self.tiebreak not in ("basis", "lexicographic", "none"):
            raise ValueError(f"unknown tiebreak {self.tiebreak!r}")
        if self.master_check not in ("always", "claims", "off"):
            raise ValueError(f"master_check must be 'always', 'claims' or 'off', got {self.master_check!r}")
        if self.M_mp <= 0 or self.M_sp <= 0:
            raise ValueError("big-M values must be positive")

    @classmethod
    def from_mapping(cls, cfg: dict) -> "EngineConfig":
        """Build from dotted keys such as ``engine.epsilon`` or ``bigm.sp``."""
        keys = {
            "engine.epsilon": "epsilon",
            "engine.max_iter": "max_iter",
            "engine.mode": "mode",
            "engine.eta_floor": "eta_floor",
            "engine.parallel_sp": "parallel_sp",
            "engine.sp_form": "sp_form",
            "engine.tiebreak": "tiebreak",
            "engine.milp_gap": "milp_gap",
            "engine.master_check": "master_check",
            "bigm.mp": "M_mp",
            "bigm.sp": "M_sp",
            "milp.backend": "backend",
            "milp.time_limit_s": "time_limit_s",
        }
        kwargs = {}
        for key, val in _flatten(cfg).items():
            if key not in keys:
                raise KeyError(f"unknown configuration key {key!r}")
            kwargs[keys[key]] = val
        return cls(**kwargs)


def _flatten(cfg: dict, prefix: str = "") -> dict:
    out = {}
    for key, val in cfg.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            out.update(_flatten(val, name + "."))
        else:
            out[name] = val
    return out


@dataclass
class Cut:
    lam: np.ndarray
    objective: np.ndarray
    basis: tuple | None
    kind: str


@dataclass
class CutPool:
    """Per-scenario, append-only collections of cut data."""

    num_scenarios: int
    cuts: list = field(default_factory=list)

    def __post_init__(self):
        if not self.cuts:
            self.cuts = [[] for _ in range(self.num_scenarios)]

    def size(self, s: int | None = None) -> int:
        if s is None:
            return sum(len(c) for c in self.cuts)
        return len(self.cuts[s])

    def _duplicate(self, s: int, cut: Cut) -> bool:
        for old in self.cuts[s]:
            if old.kind == cut.kind and old.basis == cut.basis and np.max(np.abs(old.lam - cut.lam), initial=0.0) <= 1e-9:
                return True
        return False

    def _append(self, s: int, cut: Cut) -> bool:
        if self._duplicate(s, cut):
            warnings.warn(f"duplicate cut for scenario {s} ignored", stacklevel=3)
            return False
        self.cuts[s].append(cut)
        return True


def _cut(inst, s, lam, objective, basis, kind) -> Cut:
    lam = np.asarray(lam, dtype=float)
    if objective is None:
        objective = psi_objective(inst.scenarios[s], lam)
    return Cut(lam, np.asarray(objective, dtype=float), basis, kind)


def append_parametric_cut(pool: CutPool, inst, s: int, lam, objective=None, basis=None) -> bool:
    """Queue recourse replica + OU block for ``lam``; False if a duplicate."""
    return pool._append(s, _cut(inst, s, lam, objective, basis, "pccg"))


def append_benders_cut(pool: CutPool, inst, s: int, lam, objective=None, basis=None) -> bool:
    """Queue dual hyperplane + OU block for ``lam``; False if a duplicate."""
    return pool._append(s, _cut(inst, s, lam, objective, basis, "bccg"))


@dataclass
class MasterModel:
    model: milp.MilpModel
    x: np.ndarray
    eta: np.ndarray
    ou_blocks: list
    M: float
    opinions: list = field(default_factory=list)


def assemble_master(inst: CompactInstance, pool: CutPool, cfg: EngineConfig, M: float | None = None) -> MasterModel:
    M = cfg.M_mp if M is None else M
    model = milp.MilpModel("master")
    nb = inst.n_binary
    xb = model.add_vars(nb, kind=milp.BINARY, obj=inst.c[:nb])
    xi_ = model.add_vars(inst.n_integer, kind=milp.INTEGER, obj=inst.c[nb:])
    x = np.concatenate([xb, xi_])
    if inst.upper_b.size:
        A = inst.upper_A
        eq = inst.upper_eq
        if np.any(~eq):
            model.add_rows([(A[np.flatnonzero(~eq)], x)], "<=", inst.upper_b[~eq])
        if np.any(eq):
            model.add_rows([(A[np.flatnonzero(eq)], x)], "==", inst.upper_b[eq])
    eta = model.add_vars(inst.num_scenarios, lb=cfg.eta_floor, obj=inst.probabilities)
    blocks = []
    for s, blk in enumerate(inst.scenarios):
        for cut in pool.cuts[s]:
            ou = build_ou_block(model, inst, s, cut.lam, M, x_idx=x, objective=cut.objective)
            blocks.append(ou)
            one = sp.csr_matrix(np.ones((1, 1)))
            if cut.kind == "pccg":
                y = model.add_vars(blk.n_y)
                model.add_rows([(one, [eta[s]]), (-blk.d.reshape(1, -1), y)], ">=", [0.0])
                model.add_rows([(blk.B, y), (blk.G, x), (blk.E, ou.xi)], ">=", blk.f)
            else:
                lam = cut.lam
                gx = (blk.G.T @ lam).reshape(1, -1)
                ex = (blk.E.T @ lam).reshape(1, -1)
                model.add_rows([(one, [eta[s]]), (gx, x), (ex, ou.xi)], ">=", [float(blk.f @ lam)])
    return MasterModel(model, x, eta, blocks, M)


@dataclass
class SubproblemResult:
    scenario: int
    value: float
    xi: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    objective: np.ndarray
    basis: tuple | None
    milp_value: float
    M: float
    escalations: int
    wall_time: float
    magnitude: float = 0.0


def _hygiene_ok(comps, sol, M) -> bool:
    return all(c.max_magnitude(sol) < HYGIENE_RATIO * M for c in comps)


def accepted_magnitude(blk, x_hat, xi, y, lam, backend=None) -> float:
    """Largest big-M-bounded quantity of the accepted subproblem point.

    Covers both subproblem forms: lam, y, xi, the recourse and dual slacks,
    the uncertainty slack, and a vertex theta of the uncertainty LP's dual
    with its reduced costs. The MILP's own lam may ride along recession
    rays of the dual set (rows tight at the same time, e.g. an equality
    written as two inequalities), so it is not what gets checked.
    """
    h_x = blk.h - blk.F @ x_hat
    r = blk.f - blk.G @ x_hat - blk.E @ xi
    e = psi_objective(blk, lam)
    parts = [lam, y, xi, blk.B @ y - r, blk.d - blk.B.T @ lam, h_x - blk.H @ xi]
    _, theta = solve_psi_dual_lp(blk, h_x, e, backend)
    if theta is not None:
        parts += [theta, blk.H.T @ theta - e]
    return float(max(np.max(np.abs(p), initial=0.0) for p in parts))


def _escalate(M: float, what: str, reason: str) -> float:
    new = M * 10.0
    warnings.warn(f"{what} big-M {M:.3g} {reason}; escalating to {new:.3g}", BigMWarning, stacklevel=3)
    return new


def polish(blk, x_hat, xi0, backend=None, max_rounds: int = 100):
    """Alternate dual and uncertainty LPs from ``xi0`` until no improvement.

    Returns ``(value, xi, lam)`` with xi a vertex maximizing Psi(x_hat, lam)
    and lam a vertex of the dual set optimal for xi.
    """
    h_x = blk.h - blk.F @ x_hat
    base = blk.f - blk.G @ x_hat
    xi = np.maximum(np.asarray(xi0, dtype=float), 0.0)
    val, lam = solve_dual_lp(blk, base - blk.E @ xi, backend)
    if lam is None:
        raise RecourseError(val, -1)
    for _ in range(max_rounds):
        st, xi_new = solve_psi_lp(blk, h_x, psi_objective(blk, lam), backend)
        if xi_new is None:
            raise BackendFailure(f"uncertainty LP returned {st}")
        val_new, lam_new = solve_dual_lp(blk, base - blk.E @ xi_new, backend)
        if lam_new is None:
            raise RecourseError(val_new, -1)
        if val_new <= val + 1e-9 * max(1.0, abs(val)):
            return max(val, float((base - blk.E @ xi_new) @ lam)), xi_new, lam
        xi, lam, val = xi_new, lam_new, val_new
    return val, xi, lam


def _tiebreak(blk, h_x, xi, e, mode):
    if mode == "none":
        return e, None
    if mode == "lexicographic":
        return e + lexicographic_tiebreak(e.shape[0], 1e-7), None
    H = blk.H.toarray()
    n = H.shape[1]
    A = np.vstack([H, -np.eye(n)])
    b = np.concatenate([h_x, np.zeros(n)])
    basis = vertex_basis(A, b, xi)
    if basis is None:
        return e, None
    scale = 1e-4 * max(1.0, float(np.abs(e).max(initial=0.0)))
    return e + basis_tiebreak(A, basis, scale), basis


def solve_scenario_subproblem(inst: CompactInstance, s: int, x_hat, cfg: EngineConfig) -> SubproblemResult:
    t0 = time.perf_counter()
    blk = inst.scenarios[s]
    x_hat = np.asarray(x_hat, dtype=float)
    M = cfg.M_sp
    escalations = 0
    while True:
        spm = build_sp_milp(inst, s, x_hat, M, form=cfg.sp_form)
        out = milp.solve(
            spm.model, gap=cfg.milp_gap, time_limit=cfg.time_limit_s, backend=cfg.backend,
            integrality_tol=cfg.integrality_tol, extra=cfg.solver_options,
        )
        if out.status == milp.INFEASIBLE and cfg.integrality_tol < RETRY_INTEGRALITY_TOL:
            # HiGHS can report false infeasibility at tight integrality tolerance;
            # a looser one is safe here because the polish re-evaluates xi exactly
            out = milp.solve(
                spm.model, gap=cfg.milp_gap, time_limit=cfg.time_limit_s, backend=cfg.backend,
                integrality_tol=RETRY_INTEGRALITY_TOL, extra=cfg.solver_options,
            )
        if out.status in (milp.ERROR, milp.LIMIT, milp.UNBOUNDED):
            raise BackendFailure(f"subproblem {s}: {out.status} {out.message}")
        if out.optimal:
            milp_value = spm.value(out)
            value, xi, lam = polish(blk, x_hat, out.x[spm.xi], cfg.backend)
            q, y = evaluate_recourse_lp(inst, s, x_hat, xi, backend=cfg.backend)
            magnitude = accepted_magnitude(blk, x_hat, xi, y, lam, cfg.backend)
            if magnitude < HYGIENE_RATIO * M or M * 10 > M_CAP:
                break
            reason = "is saturated"
        elif M * 10 > M_CAP:
            _check_nonempty(blk, x_hat, s, cfg.backend)
            raise BackendFailure(f"subproblem {s} infeasible even with big-M {M:.3g}")
        else:
            reason = "makes the subproblem infeasible"
        M = _escalate(M, "subproblem", reason)
        escalations += 1
    if value > milp_value + 1e-6 * max(1.0, abs(value)):
        logger.warning("scenario %d: polish improved MILP value %.9g -> %.9g", s, milp_value, value)
    e = psi_objective(blk, lam)
    e, basis = _tiebreak(blk, blk.h - blk.F @ x_hat, xi, e, cfg.tiebreak)
    return SubproblemResult(s, q, xi, y, lam, e, basis, milp_value, M, escalations, time.perf_counter() - t0, magnitude)


def _check_nonempty(blk, x_hat, s, backend):
    h_x = blk.h - blk.F @ x_hat
    st, xi = solve_psi_lp(blk, h_x, np.zeros(blk.n_xi), backend)
    if xi is None and st == milp.INFEASIBLE:
        raise SubproblemInfeasible(s)


@dataclass
class IterationRecord:
    iteration: int
    lb: float
    ub: float
    gap: float
    master_s: float
    sp_total_s: float
    x: np.ndarray
    sp_values: np.ndarray
    cuts_added: int


@dataclass
class EngineResult:
    status: str
    x: np.ndarray | None
    objective: float
    lb: float
    ub: float
    trace: list
    xi: list
    y: list
    wall_time: float
    mode: str
    escalations: int = 0
    cut_counts: list = field(default_factory=list)
    # largest big-M-bounded magnitude over M among accepted SP and MP points
    hygiene_ratio: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def gap(self) -> float:
        return relative_gap(self.lb, self.ub)


def relative_gap(lb: float, ub: float) -> float:
    if ub == lb:
        return 0.0
    if lb == 0.0:
        return math.inf
    return (ub - lb) / abs(lb)


def _solve_all(inst, x_hat, cfg, pool_exec):
    jobs = range(inst.num_scenarios)
    if pool_exec is None:
        return [solve_scenario_subproblem(inst, s, x_hat, cfg) for s in jobs]
    futures = [pool_exec.submit(solve_scenario_subproblem, inst, s, x_hat, cfg) for s in jobs]
    return [f.result() for f in futures]


def _converged(lb, ub, cfg) -> bool:
    return ub - lb <= cfg.epsilon * abs(lb) + cfg.milp_gap * max(1.0, abs(lb))


def _master_settings(cfg: EngineConfig):
    """Primary solver setting first, then alternates used as second opinions."""
    alt = 1e-8 if cfg.integrality_tol > 1e-8 else 1e-7
    base = dict(cfg.solver_options)
    yield cfg.integrality_tol, base
    yield cfg.integrality_tol, {**base, "presolve": "off"}
    yield alt, base
    yield alt, {**base, "presolve": "off"}


def _check_master(mp: "MasterModel", cfg: EngineConfig, ub: float, seen: dict, force: bool = False):
    """Second opinions on a master answer under alternate solver settings.

    Big-M masters are numerically fragile: a MILP solver can report an
    "optimal" value that cuts off the true optimum, or one that exploits
    tolerances. An answer above a feasible objective is provably wrong, and
    cuts are exact at the points that generated them, so an answer below the
    known value of an evaluated plan is wrong too. The lowest consistent
    answer wins. Returns ``(answer or None, rechecked)``.
    """
    first = mp.opinions[0]

    def bound(o):
        return min(o.bound, o.objective)

    tol = cfg.milp_gap * max(1.0, abs(ub) if math.isfinite(ub) else abs(bound(first)))

    def consistent(o):
        if not o.optimal or bound(o) > ub + tol:
            return False
        known = seen.get(tuple(np.round(o.x[mp.x]) + 0.0))
        if known is not None and o.objective < known - tol:
            return False
        return all(_hygiene_ok(b.complementarities, o.x, mp.M) for b in mp.ou_blocks)

    claim = math.isfinite(ub) and (bound(first) > ub or _converged(bound(first), ub, cfg))
    if cfg.master_check == "off" or not (force or claim or cfg.master_check == "always"):
        return first, False
    settings = list(_master_settings(cfg))
    while True:
        accepted = [o for o in mp.opinions if consistent(o)]
        if len(accepted) >= 2 or len(mp.opinions) >= len(settings):
            break
        itol, extra = settings[len(mp.opinions)]
        out = milp.solve(mp.model, gap=cfg.milp_gap, time_limit=cfg.time_limit_s, backend=cfg.backend,
                         integrality_tol=itol, extra=extra)
        mp.opinions.append(out)
        if out.optimal and not consistent(out):
            logger.info("master answer %.9g rejected (UB %.9g, tol %g, %s)", bound(out), ub, itol, extra or "defaults")
    if not accepted:
        return None, True
    best = min(accepted, key=bound)
    if abs(bound(best) - bound(first)) > tol:
        logger.info("master cross-check moved the bound from %.9g to %.9g", bound(first), bound(best))
    return best, True


def run(inst: CompactInstance, cfg: EngineConfig | None = None) -> EngineResult:
    """Run the decomposition until the relative gap drops to ``cfg.epsilon``."""
    cfg = cfg or EngineConfig()
    report = validate_instance(inst)
    if not report.ok:
        raise ValueError(f"invalid instance:\n{report}")
    t_start = time.perf_counter()
    pool = CutPool(inst.num_scenarios)
    add = append_parametric_cut if cfg.mode == "pccg" else append_benders_cut
    lb, ub = -math.inf, math.inf
    inc_x, inc_xi, inc_y = None, None, None
    trace: list[IterationRecord] = []
    escalations = 0
    ratio = 0.0
    seen: dict = {}
    M_mp = cfg.M_mp
    sp_cfg = cfg
    executor = ThreadPoolExecutor(max_workers=min(inst.num_scenarios, 8)) if cfg.parallel_sp and inst.num_scenarios > 1 else None

    def evaluate(x_hat):
        nonlocal ub, inc_x, inc_xi, inc_y, escalations, sp_cfg, ratio
        results = _solve_all(inst, x_hat, sp_cfg, executor)
        ratio = max([ratio] + [r.magnitude / r.M for r in results])
        m_needed = max(r.M for r in results)
        if m_needed > sp_cfg.M_sp:
            sp_cfg = replace(sp_cfg, M_sp=m_needed)
        escalations += sum(r.escalations for r in results)
        total = float(inst.c @ x_hat) + sum(blk.pi * r.value for blk, r in zip(inst.scenarios, results))
        seen[tuple(x_hat)] = total
        if total < ub:
            ub = total
            inc_x = x_hat.copy()
            inc_xi = [r.xi for r in results]
            inc_y = [r.y for r in results]
        added = 0
        for r in results:
            added += add(pool, inst, r.scenario, r.lam, r.objective, r.basis)
        return results, added

    status = ITER_LIMIT
    try:
        if cfg.seed_x is not None:
            seed = np.asarray(cfg.seed_x, dtype=float)
            if not inst.x_feasible(seed, tol=1e-6):
                raise ValueError("seed x violates the upper-level constraints")
            evaluate(np.round(seed))
        for it in range(1, cfg.max_iter + 1):
            t0 = time.perf_counter()
            while True:
                mp = assemble_master(inst, pool, cfg, M_mp)
                out = milp.solve(
                    mp.model, gap=cfg.milp_gap, time_limit=cfg.time_limit_s, backend=cfg.backend,
                    integrality_tol=cfg.integrality_tol, extra=cfg.solver_options,
                )
                clean = out.optimal and all(_hygiene_ok(b.complementarities, out.x, M_mp) for b in mp.ou_blocks)
                if clean:
                    break
                if out.status in (milp.ERROR, milp.LIMIT):
                    raise BackendFailure(f"master: {out.status} {out.message}")
                if out.status == milp.UNBOUNDED:
                    raise BackendFailure("master unbounded; upper-level integer variables need bounds")
                if not pool.size() or M_mp * 10 > M_CAP:
                    if out.optimal:
                        break
                    status = INFEASIBLE
                    raise _Stop()
                M_mp = _escalate(M_mp, "master", "is saturated" if out.optimal else "makes the master infeasible")
                escalations += 1
            mp.opinions = [out]
            rechecked = False
            if out.optimal:
                checked, rechecked = _check_master(mp, cfg, ub, seen)
                if checked is None:
                    raise BackendFailure(f"no solver setting gave a master answer consistent with UB {ub:.9g}")
                out = checked
                ratio = max([ratio] + [c.max_magnitude(out.x) / mp.M for b in mp.ou_blocks for c in b.complementarities])
            master_s = time.perf_counter() - t0
            bound = min(out.bound, out.objective)
            x_hat = np.round(out.x[mp.x]) + 0.0
            seen_before = dict(seen)
            t1 = time.perf_counter()
            results, added = evaluate(x_hat)
            sp_s = time.perf_counter() - t1
            moved = False
            if out.optimal and (not added or _converged(bound, ub, cfg)):
                # verify a convergence claim, and re-judge an answer whose plan
                # produced no new cut (the master was already exact there)
                t2 = time.perf_counter()
                checked, again = _check_master(mp, cfg, ub, seen if not added else seen_before, force=True)
                master_s += time.perf_counter() - t2
                rechecked = rechecked or again
                if checked is not None:
                    bound = min(checked.bound, checked.objective)
                    moved = bool(np.any(np.round(checked.x[mp.x]) + 0.0 != x_hat))
            # a cross-checked bound overrides history built on unchecked answers
            lb = bound if rechecked and bound < lb else max(lb, bound)
            trace.append(
                IterationRecord(
                    it, lb, ub, relative_gap(lb, ub), master_s, sp_s, x_hat,
                    np.array([r.value for r in results]), added,
                )
            )
            logger.info("iter %d lb=%.9g ub=%.9g gap=%.3g", it, lb, ub, relative_gap(lb, ub))
            if _converged(bound, ub, cfg):
                status = CONVERGED
                break
            if not added and not moved:
                status = STALLED
                break
    except _Stop:
        pass
    finally:
        if executor is not None:
            executor.shutdown()
    return EngineResult(
        status,
        inc_x,
        ub if inc_x is not None else math.inf,
        lb,
        ub,
        trace,
        inc_xi or [],
        inc_y or [],
        time.perf_counter() - t_start,
        cfg.mode,
        escalations,
        [pool.size(s) for s in range(inst.num_scenarios)],
        ratio,
    )


class _Stop(Exception):
    pass
