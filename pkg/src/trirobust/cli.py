"""Command line: solve, verify, sweep, metrics and die-value.

Exit codes: 0 success, 1 infeasible or not converged, 2 input error,
3 solver backend error. Results land in ``<out>/<case>/``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import engine, io, milp
from .instance import RecourseError, strip_decision_dependence
from .nhemp import compile_case, compute_die_value, compute_metrics, run_die_sensitivity, solution_from_result
from .nhemp.compiler import plan_bounds
from .nhemp.metrics import check_integrity
from .nhemp.types import CaseError
from .oracle import EmptyPolytopeError, OracleGuardError, exhaustive_trilevel_solve, worst_case_enumeration

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_BACKEND = 0, 1, 2, 3

logger = logging.getLogger("trirobust")


class _Loaded:
    """A case file resolved to a compact instance, plus the planning view if any."""

    def __init__(self, path):
        self.path = Path(path)
        if io.is_compact_document(self.path):
            self.case, self.layout = None, None
            self.inst, self.x_bounds = io.load_compact_with_bounds(self.path)
            self.name = self.inst.name
            self.config = {}
        else:
            self.case = io.load_case(self.path)
            self.inst, self.layout = compile_case(self.case)
            self.x_bounds = plan_bounds(self.case, self.layout)
            self.name = self.case.name
            self.config = self.case.config


def parse_chi(text: str) -> list[float]:
    """``start:step:stop`` (inclusive) or a comma list."""
    try:
        if ":" in text:
            a, step, b = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return [round(a + k * step, 12) for k in range(n)]
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad chi grid {text!r}; use start:step:stop") from None


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        out[k] = _merge(out.get(k, {}), v) if isinstance(v, dict) else v
    return out


def build_config(loaded: _Loaded, args) -> engine.EngineConfig:
    cfg_doc = dict(loaded.config)
    if args.config:
        extra = json.loads(Path(args.config).read_text())
        if not isinstance(extra, dict):
            raise io.InputError(f"{args.config}: configuration must be a JSON object")
        cfg_doc = _merge(cfg_doc, extra)
    try:
        cfg = engine.EngineConfig.from_mapping(cfg_doc)
        if getattr(args, "mode", None):
            cfg = replace(cfg, mode=args.mode)
        if getattr(args, "epsilon", None) is not None:
            cfg = replace(cfg, epsilon=args.epsilon)
        if getattr(args, "max_iter", None) is not None:
            cfg = replace(cfg, max_iter=args.max_iter)
    except (KeyError, TypeError, ValueError) as exc:
        raise io.InputError(f"configuration: {exc}") from exc
    env = os.environ.get(milp.ENV_BACKEND)
    if env:
        cfg = replace(cfg, backend=env)
    milp.get_backend(cfg.backend)
    return cfg


def _outdir(args, name: str) -> Path:
    d = Path(args.out) / name
    d.mkdir(parents=True, exist_ok=True)
    return d


def _summary_row(result: engine.EngineResult) -> dict:
    return {
        "status": result.status, "mode": result.mode, "objective": float(result.objective), "lb": float(result.lb),
        "ub": float(result.ub), "iterations": result.iterations, "wall_time_s": float(result.wall_time),
    }


def cmd_solve(args) -> int:
    loaded = _Loaded(args.case)
    cfg = build_config(loaded, args)
    result = engine.run(loaded.inst, cfg)
    out = _outdir(args, loaded.name)
    if result.trace:
        io.emit_trace(result, out / "trace.csv")
    io.save_solution(result, out / "solution.json")
    row = _summary_row(result)
    if loaded.case is not None and result.x is not None:
        met = compute_metrics(loaded.inst, loaded.layout, solution_from_result(result))
        row.update(met.as_row())
    io.write_rows([row], out / "metrics.csv")
    print(f"{loaded.name}: {result.status} objective={result.objective:.10g} iterations={result.iterations} "
          f"({result.wall_time:.2f}s) -> {out}")
    return EXIT_OK if result.status == engine.CONVERGED else EXIT_FAIL


def cmd_verify(args) -> int:
    loaded = _Loaded(args.case)
    cfg = replace(build_config(loaded, args), epsilon=0.0)
    if loaded.x_bounds is None:
        raise io.InputError(f"{args.case}: no x_bounds, cannot enumerate the upper level")
    x_or, v_or = exhaustive_trilevel_solve(loaded.inst, loaded.x_bounds, backend=cfg.backend)
    ok = True
    for mode in ("pccg", "bccg"):
        res = engine.run(loaded.inst, replace(cfg, mode=mode))
        match = res.status == engine.CONVERGED and abs(res.objective - v_or) <= 1e-6 * max(1.0, abs(v_or))
        ok &= match
        print(f"{mode}: {res.status} objective={res.objective:.10g} iterations={res.iterations} "
              f"{'matches' if match else 'DIFFERS FROM'} oracle {v_or:.10g}")
        if res.x is not None:
            for s in range(loaded.inst.num_scenarios):
                q, _ = worst_case_enumeration(loaded.inst, s, res.x, backend=cfg.backend)
                sp_val = res.trace[-1].sp_values[s] if np.array_equal(res.trace[-1].x, res.x) else None
                if sp_val is not None and abs(sp_val - q) > 1e-6 * max(1.0, abs(q)):
                    ok = False
                    print(f"  scenario {s}: subproblem {sp_val:.10g} vs enumeration {q:.10g}")
        if loaded.case is not None and res.x is not None:
            bad = check_integrity(loaded.inst, loaded.layout, loaded.case, solution_from_result(res))
            ok &= not bad
            for b in bad:
                print(f"  integrity: {b}")
    print("verify:", "ok" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_FAIL


def _need_case(loaded: _Loaded, what: str):
    if loaded.case is None:
        raise io.InputError(f"{what} needs a planning case, not a compact instance")


def cmd_sweep(args) -> int:
    loaded = _Loaded(args.case)
    _need_case(loaded, "sweep")
    cfg = build_config(loaded, args)
    rows = run_die_sensitivity(loaded.case, args.chi, cfg)
    out = _outdir(args, loaded.name)
    io.write_rows([r.as_row() for r in rows], out / "sweep.csv")
    for r in rows:
        print(f"chi={r.chi:.3g} phi={r.phi:.10g} gl={r.gl_total:.6g} v_die={r.v_die_rel:.4g}% {r.status}")
    return EXIT_OK if all(r.status == engine.CONVERGED for r in rows) else EXIT_FAIL


def cmd_metrics(args) -> int:
    loaded = _Loaded(args.case)
    _need_case(loaded, "metrics")
    sol = io.load_solution(args.solution)
    if sol.x.shape != (loaded.inst.n_x,) or len(sol.y) != loaded.inst.num_scenarios:
        raise io.InputError(f"{args.solution}: solution does not fit case {loaded.name}")
    met = compute_metrics(loaded.inst, loaded.layout, sol)
    out = _outdir(args, loaded.name)
    io.write_rows([io.metrics_row(loaded.name, met)], out / "metrics.csv")
    print(f"phi={met.phi:.10g} capex={met.phi_capex:.10g} om={met.phi_om:.10g} gl={met.gl_total:.6g} "
          f"U=[{met.min_u:.4f}, {met.max_u:.4f}] mean={met.ave_u:.4f} var={met.var_u:.3g}")
    return EXIT_OK


def cmd_die_value(args) -> int:
    loaded = _Loaded(args.case)
    cfg = build_config(loaded, args)
    plan = io.load_plan(args.diu_plan, loaded.inst.n_x)
    if not loaded.inst.x_feasible(plan, tol=1e-6):
        raise io.InputError(f"{args.diu_plan}: plan violates the upper-level constraints")
    dv = compute_die_value(loaded.inst, plan, cfg)
    out = _outdir(args, loaded.name)
    row = {"phi_fixed": dv.phi_fixed, "phi_ddu": dv.phi_ddu, "v_die": dv.v_die, "v_die_rel": dv.v_die_rel,
           "status": dv.result.status}
    io.write_rows([row], out / "die_value.csv")
    print(f"phi_1#={dv.phi_fixed:.10g} phi_2={dv.phi_ddu:.10g} V_DIE={dv.v_die:.10g} ({dv.v_die_rel:.4g}%)")
    return EXIT_OK if dv.result.status == engine.CONVERGED else EXIT_FAIL


def cmd_diu_plan(args) -> int:
    loaded = _Loaded(args.case)
    cfg = build_config(loaded, args)
    res = engine.run(strip_decision_dependence(loaded.inst), cfg)
    if res.x is None:
        print(f"static-uncertainty solve ended {res.status} without a plan")
        return EXIT_FAIL
    Path(args.output).write_text(json.dumps({"x": np.asarray(res.x).tolist()}))
    print(f"static-uncertainty plan ({res.status}, objective {res.objective:.10g}) -> {args.output}")
    return EXIT_OK if res.status == engine.CONVERGED else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trirobust", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--out", default="out", help="results root (default: out)")
    p.add_argument("--config", help="JSON file with engine/bigm/milp settings")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a planning case or compact instance")
    s.add_argument("case")
    s.add_argument("--mode", choices=("pccg", "bccg"))
    s.add_argument("--epsilon", type=float)
    s.add_argument("--max-iter", type=int, dest="max_iter")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify", help="cross-check both engines against brute force")
    s.add_argument("case")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="value of the demand-inducing effect over a chi grid")
    s.add_argument("case")
    s.add_argument("--chi", type=parse_chi, default=parse_chi("0:0.1:1"))
    s.add_argument("--epsilon", type=float)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("metrics", help="expenses, refueling and voltage statistics of a solution")
    s.add_argument("case")
    s.add_argument("solution")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("die-value", help="re-evaluate a static-uncertainty plan under DDU")
    s.add_argument("case")
    s.add_argument("diu_plan")
    s.add_argument("--epsilon", type=float)
    s.set_defaults(func=cmd_die_value)

    s = sub.add_parser("diu-plan", help="solve with the decision dependence removed and save the plan")
    s.add_argument("case")
    s.add_argument("output")
    s.set_defaults(func=cmd_diu_plan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.filterwarnings("ignore", message="duplicate cut")
    try:
        return args.func(args)
    except (io.InputError, CaseError, OracleGuardError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (engine.SubproblemInfeasible, EmptyPolytopeError, RecourseError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (engine.BackendFailure, milp.MilpError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
