"""Planning metrics, the value of the demand-inducing effect, and the chi sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .. import engine
from ..instance import CompactInstance, strip_decision_dependence
from .compiler import Layout, compile_case
from .types import CaseError, NhempCase, PlanningMetrics, PlanningSolution

logger = logging.getLogger(__name__)


def engine_config(case: NhempCase, **overrides) -> engine.EngineConfig:
    cfg = engine.EngineConfig.from_mapping(case.config)
    return replace(cfg, **overrides)


def solution_from_result(result: engine.EngineResult) -> PlanningSolution:
    if result.x is None:
        raise CaseError(f"engine returned no plan (status {result.status})")
    return PlanningSolution(np.asarray(result.x), list(result.y), list(result.xi), result.objective)


def compute_metrics(inst: CompactInstance, layout: Layout, solution: PlanningSolution) -> PlanningMetrics:
    """Expense split, mean met refueling demand and voltage statistics.

    Phi is recomputed from x and the worst-case operations, so
    phi = phi_capex + phi_om holds exactly.
    """
    x = np.asarray(solution.x, dtype=float)
    if len(solution.y) != inst.num_scenarios:
        raise ValueError("solution needs one operation vector per scenario")
    capex = float(inst.c @ x)
    om = 0.0
    gl = np.zeros(layout.n_cand)
    volts = []
    for blk, y in zip(inst.scenarios, solution.y):
        y = np.asarray(y, dtype=float)
        if y.shape != (blk.n_y,):
            raise ValueError("operation vector has the wrong length")
        om += blk.pi * float(blk.d @ y)
        ops = layout.decode(y)
        gl += blk.pi * ops["gl"].mean(axis=0)
        volts.append(ops["U"].ravel())
    u = np.concatenate(volts)
    return PlanningMetrics(
        phi=capex + om,
        phi_capex=capex,
        phi_om=om,
        gl_node=gl,
        gl_total=float(gl.sum()),
        max_u=float(u.max()),
        min_u=float(u.min()),
        ave_u=float(u.mean()),
        var_u=float(u.var()),
    )


def die_value(phi_fixed: float, phi_ddu: float) -> tuple[float, float]:
    """Absolute and relative (%) value of the demand-inducing effect."""
    v = phi_fixed - phi_ddu
    return v, 100.0 * v / abs(phi_fixed) if phi_fixed else 0.0


def evaluate_plan(inst: CompactInstance, x, cfg: engine.EngineConfig | None = None) -> float:
    """c.x plus the expected worst-case operating expense at a fixed plan."""
    cfg = cfg or engine.EngineConfig()
    x = np.asarray(x, dtype=float)
    if not inst.x_feasible(x, tol=1e-6):
        raise CaseError("fixed plan violates the upper-level constraints")
    x = np.round(x)
    return float(inst.c @ x) + sum(
        blk.pi * engine.solve_scenario_subproblem(inst, s, x, cfg).value for s, blk in enumerate(inst.scenarios)
    )


@dataclass
class DieValue:
    v_die: float
    v_die_rel: float
    phi_fixed: float
    phi_ddu: float
    result: engine.EngineResult


def compute_die_value(inst_ddu: CompactInstance, plan_from_diu, cfg: engine.EngineConfig | None = None) -> DieValue:
    """Compare the static-uncertainty plan, re-evaluated under DDU, to a DDU solve.

    The DDU solve is seeded with the static plan, so its incumbent can only
    improve on the fixed-plan value.
    """
    cfg = cfg or engine.EngineConfig()
    phi_fixed = evaluate_plan(inst_ddu, plan_from_diu, cfg)
    res = engine.run(inst_ddu, replace(cfg, seed_x=np.round(np.asarray(plan_from_diu, dtype=float))))
    v, rel = die_value(phi_fixed, res.objective)
    return DieValue(v, rel, phi_fixed, res.objective, res)


@dataclass
class SweepRow:
    chi: float
    phi: float
    gl_total: float
    v_die: float
    v_die_rel: float
    status: str
    iterations: int

    def as_row(self) -> dict:
        return dict(self.__dict__)


def run_die_sensitivity(case: NhempCase, chi_grid, cfg: engine.EngineConfig | None = None) -> list[SweepRow]:
    """Scale every induced slope by chi, drop the town band, and re-solve.

    The static plan does not depend on chi, so it is solved once and then
    re-evaluated under each scaled set.
    """
    chis = [float(c) for c in chi_grid]
    if any(not 0.0 <= c <= 1.0 for c in chis):
        raise ValueError("chi values must lie in [0, 1]")
    cfg = cfg or engine_config(case)
    base = case.replace(ddu=replace(case.ddu, town_band=False))
    inst0, _ = compile_case(base)
    diu = engine.run(strip_decision_dependence(inst0), cfg)
    if diu.x is None:
        raise CaseError(f"static-uncertainty solve failed with status {diu.status}")
    rows = []
    for chi in chis:
        inst, lay = compile_case(base.replace(ddu=base.ddu.scaled(chi)))
        dv = compute_die_value(inst, diu.x, cfg)
        met = compute_metrics(inst, lay, solution_from_result(dv.result))
        rows.append(SweepRow(chi, dv.phi_ddu, met.gl_total, dv.v_die, dv.v_die_rel, dv.result.status, dv.result.iterations))
        logger.info("chi=%.2f phi=%.6g gl=%.4g v_die=%.3g%%", chi, dv.phi_ddu, met.gl_total, dv.v_die_rel)
    return rows


def check_integrity(inst: CompactInstance, layout: Layout, case: NhempCase, solution: PlanningSolution, tol: float = 1e-6) -> list[str]:
    """Physical checks on a solved plan; returns a list of violations."""
    bad = []
    inv = layout.investment(solution.x)
    cat, sc, net = case.catalog, case.scenarios, case.network
    cand = net.candidates
    for z, members in enumerate(case.zones.zones):
        total = sum(inv["u"][cand.index(i)] for i in members)
        if abs(total - 1.0) > tol:
            bad.append(f"zone {case.zones.names[z]} hosts {total:g} microgrids")
    keep = (1.0 - cat.phi_ht) ** sc.dt
    for s, y in enumerate(solution.y):
        ops = layout.decode(y)
        scale = lambda v: tol * max(1.0, float(np.abs(v).max(initial=0.0)))  # noqa: E731
        over = ops["gl"] - cat.sr * inv["n"][None, :]
        if np.any(over > scale(ops["gl"])):
            bad.append(f"scenario {s}: refueling exceeds the HD service rate")
        U = ops["U"]
        if np.any(U < net.U_min[None, :] - tol) or np.any(U > net.U_max[None, :] + tol):
            bad.append(f"scenario {s}: voltage outside bounds")
        net_charge = (cat.eta_ch * ops["pc"] - ops["pd"] / cat.eta_dis).sum(axis=0)
        if np.any(np.abs(net_charge) > scale(ops["pc"]) + tol):
            bad.append(f"scenario {s}: ESS energy does not close over the day")
        loh = ops["loh"]
        inflow = ops["g_elz"] + ops["g_pur"] - ops["gl"]
        resid = np.roll(loh, -1, axis=0) - keep * loh - sc.dt * inflow
        if np.any(np.abs(resid) > scale(loh) + tol):
            bad.append(f"scenario {s}: tank mass balance violated")
    return bad
