"""Case bundles, compact instances and result files on disk.

Everything is JSON. A compact instance may instead be stored as an ``.npz``
of sparse triplets, which is what large compiled cases want.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import scipy.sparse as sp

from .engine import EngineResult, relative_gap
from .instance import CompactInstance, ScenarioBlock
from .nhemp.types import (
    CaseError,
    ComponentCatalog,
    DduCoefficients,
    DistributionNetwork,
    NhempCase,
    PlanningMetrics,
    PlanningSolution,
    ScenarioSet,
    ZonePartition,
)

TRACE_HEADER = ("iter", "lb", "ub", "gap", "master_s", "sp_total_s")


class InputError(ValueError):
    """Unreadable, schema-invalid or inconsistent input file."""


_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}
_cube = {"type": "array", "items": _mat}
_num_or_vec = {"oneOf": [_num, _vec]}

CASE_SCHEMA = {
    "type": "object",
    "required": ["name", "network", "zones", "catalog", "scenarios", "ddu"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "network": {
            "type": "object",
            "required": ["n_nodes", "lines", "r", "x", "s_line", "candidates", "s_lv", "s_mv"],
            "additionalProperties": False,
            "properties": {
                "n_nodes": {"type": "integer", "minimum": 1},
                "lines": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
                "r": _vec,
                "x": _vec,
                "s_line": _vec,
                "candidates": {"type": "array", "items": {"type": "integer"}},
                "s_lv": _num_or_vec,
                "s_mv": _num,
                "U0": _num,
                "U_min": _num_or_vec,
                "U_max": _num_or_vec,
            },
        },
        "zones": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["nodes"],
                "additionalProperties": False,
                "properties": {"name": {"type": "string"}, "nodes": {"type": "array", "items": {"type": "integer"}, "minItems": 1}},
            },
        },
        "catalog": {
            "type": "object",
            "required": [
                "c_hem", "c_pv", "p_pv", "c_wt", "p_wt", "c_bb", "p_bb", "e_bb", "eta_ch", "eta_dis", "dod", "kappa",
                "c_elz", "p_elz", "eta_elz", "lhv", "c_ht", "p_ht", "phi_ht", "c_hd", "sr", "bounds",
            ],
            "additionalProperties": False,
            "properties": {
                "bounds": {
                    "type": "object",
                    "additionalProperties": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                },
                "res_angle_min": _num,
                "res_angle_max": _num,
            },
            "patternProperties": {"^(c|p|e|eta|phi)_|^(dod|kappa|lhv|sr)$": _num},
        },
        "periods": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dt": {"type": "number", "exclusiveMinimum": 0}, "sigma": {"type": "number", "exclusiveMinimum": 0}},
        },
        "load_angle": _vec,
        "scenarios": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": [
                    "pi", "res_factor", "load", "price_import", "price_retail", "price_h2_buy", "price_h2_sell",
                    "penalty_ls", "g_pur_cap", "xi_hi", "xi_lo",
                ],
                "additionalProperties": False,
                "properties": {
                    "pi": {"type": "number", "minimum": 0},
                    "res_factor": _cube,
                    "load": _mat,
                    "price_import": _vec,
                    "price_retail": _vec,
                    "price_h2_buy": _num,
                    "price_h2_sell": _num,
                    "penalty_ls": _num,
                    "g_pur_cap": _mat,
                    "xi_hi": _mat,
                    "xi_lo": _mat,
                    "zeta_hi": _vec,
                    "zeta_lo": _vec,
                },
            },
        },
        "ddu": {
            "type": "object",
            "required": ["gamma_hi", "gamma_lo"],
            "additionalProperties": False,
            "properties": {
                "gamma_hi": _mat,
                "gamma_lo": _mat,
                "alpha_hi": _vec,
                "alpha_lo": _vec,
                "town_band": {"type": "boolean"},
            },
        },
        "polygon_segments": {"type": "integer", "minimum": 4},
        "config": {"type": "object"},
    },
}


def _where(err: jsonschema.ValidationError) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _field_error(err: jsonschema.ValidationError) -> str:
    if err.validator == "required":
        missing = err.message.split("'")[1]
        base = _where(err)
        return f"{missing if base == '<root>' else base + '.' + missing}: required field is missing"
    return f"{_where(err)}: {err.message}"


def _validate(doc, schema, source) -> None:
    errors = sorted(jsonschema.Draft7Validator(schema).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise InputError(f"{source}: " + "; ".join(_field_error(e) for e in errors[:5]))


def _read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# -- planning cases -----------------------------------------------------------


def case_to_dict(case: NhempCase) -> dict:
    net, sc, ddu, cat = case.network, case.scenarios, case.ddu, case.catalog
    network = {
        "n_nodes": net.n_nodes,
        "lines": [list(l) for l in net.lines],
        "r": _plain(net.r),
        "x": _plain(net.x),
        "s_line": _plain(net.s_line),
        "candidates": list(net.candidates),
        "s_lv": _plain(net.s_lv),
        "s_mv": float(net.s_mv),
        "U0": float(net.U0),
        "U_min": _plain(net.U_min),
        "U_max": _plain(net.U_max),
    }
    catalog = {k: _plain(v) for k, v in cat.__dict__.items() if k != "bounds"}
    catalog["bounds"] = {k: [int(a), int(b)] for k, (a, b) in cat.bounds.items()}
    scenarios = []
    for s in range(sc.num_scenarios):
        scenarios.append({
            "pi": float(sc.pi[s]),
            "res_factor": _plain(sc.res_factor[s]),
            "load": _plain(sc.load[s]),
            "price_import": _plain(sc.price_import[s]),
            "price_retail": _plain(sc.price_retail[s]),
            "price_h2_buy": float(sc.price_h2_buy[s]),
            "price_h2_sell": float(sc.price_h2_sell[s]),
            "penalty_ls": float(sc.penalty_ls[s]),
            "g_pur_cap": _plain(sc.g_pur_cap[s]),
            "xi_hi": _plain(ddu.xi_hi[s]),
            "xi_lo": _plain(ddu.xi_lo[s]),
            "zeta_hi": _plain(ddu.zeta_hi[s]),
            "zeta_lo": _plain(ddu.zeta_lo[s]),
        })
    zones = [{"name": n, "nodes": list(z)} for n, z in zip(case.zones.names, case.zones.zones)]
    return {
        "name": case.name,
        "network": network,
        "zones": zones,
        "catalog": catalog,
        "periods": {"dt": float(sc.dt), "sigma": float(sc.sigma)},
        "load_angle": _plain(sc.load_angle),
        "scenarios": scenarios,
        "ddu": {
            "gamma_hi": _plain(ddu.gamma_hi),
            "gamma_lo": _plain(ddu.gamma_lo),
            "alpha_hi": _plain(ddu.alpha_hi),
            "alpha_lo": _plain(ddu.alpha_lo),
            "town_band": bool(ddu.town_band),
        },
        "polygon_segments": case.polygon_segments,
        "config": case.config,
    }


def case_from_dict(doc: dict, source: str = "case") -> NhempCase:
    _validate(doc, CASE_SCHEMA, source)
    net_doc = doc["network"]
    known = set(range(net_doc["n_nodes"]))
    for k, z in enumerate(doc["zones"]):
        bad = [i for i in z["nodes"] if i not in known]
        if bad:
            raise InputError(f"{source}: zones[{k}].nodes references unknown node {bad[0]}")
    for k, i in enumerate(net_doc["candidates"]):
        if i not in known:
            raise InputError(f"{source}: network.candidates[{k}] references unknown node {i}")
    for k, (a, b) in enumerate(net_doc["lines"]):
        if a not in known or b not in known:
            raise InputError(f"{source}: network.lines[{k}] references an unknown node")
    scen = doc["scenarios"]
    n_nodes = net_doc["n_nodes"]
    per = doc.get("periods", {})

    def stack(key):
        return np.array([s[key] for s in scen], dtype=float)

    try:
        net = DistributionNetwork(**net_doc)
        names = [z.get("name") for z in doc["zones"]]
        zones = ZonePartition([z["nodes"] for z in doc["zones"]], None if None in names else names)
        cat_doc = dict(doc["catalog"])
        cat_doc["bounds"] = {k: tuple(v) for k, v in cat_doc["bounds"].items()}
        catalog = ComponentCatalog(**cat_doc)
        scenarios = ScenarioSet(
            pi=stack("pi"),
            res_factor=stack("res_factor"),
            load=stack("load"),
            load_angle=doc.get("load_angle", [0.0] * n_nodes),
            price_import=stack("price_import"),
            price_retail=stack("price_retail"),
            price_h2_buy=stack("price_h2_buy"),
            price_h2_sell=stack("price_h2_sell"),
            penalty_ls=stack("penalty_ls"),
            g_pur_cap=stack("g_pur_cap"),
            dt=per.get("dt", 1.0),
            sigma=per.get("sigma", 365.0),
        )
        has = lambda key: all(key in s for s in scen)  # noqa: E731
        ddu_doc = doc["ddu"]
        ddu = DduCoefficients(
            xi_hi=stack("xi_hi"),
            xi_lo=stack("xi_lo"),
            gamma_hi=ddu_doc["gamma_hi"],
            gamma_lo=ddu_doc["gamma_lo"],
            zeta_hi=stack("zeta_hi") if has("zeta_hi") else None,
            zeta_lo=stack("zeta_lo") if has("zeta_lo") else None,
            alpha_hi=ddu_doc.get("alpha_hi"),
            alpha_lo=ddu_doc.get("alpha_lo"),
            town_band=ddu_doc.get("town_band", True),
        )
        kwargs = {}
        if "config" in doc:
            kwargs["config"] = doc["config"]
        case = NhempCase(doc["name"], net, zones, catalog, scenarios, ddu, doc.get("polygon_segments", 12), **kwargs)
        case.validate()
    except (CaseError, ValueError, TypeError) as exc:
        raise InputError(f"{source}: {exc}") from exc
    return case


def load_case(path) -> NhempCase:
    return case_from_dict(_read_json(path), str(path))


def save_case(case: NhempCase, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(case_to_dict(case), indent=1))
    return path


# -- compact instances -------------------------------------------------------

_triplet = {
    "type": "object",
    "required": ["shape", "row", "col", "val"],
    "additionalProperties": False,
    "properties": {
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "row": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "col": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "val": _vec,
    },
}

COMPACT_SCHEMA = {
    "type": "object",
    "required": ["c", "upper_A", "upper_b", "n_binary", "n_integer", "scenarios"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "c": _vec,
        "upper_A": _triplet,
        "upper_b": _vec,
        "upper_eq": {"type": "array", "items": {"type": "boolean"}},
        "n_binary": {"type": "integer", "minimum": 0},
        "n_integer": {"type": "integer", "minimum": 0},
        "x_bounds": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
        "scenarios": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["pi", "d", "f", "h", "H", "F", "B", "G", "E"],
                "additionalProperties": False,
                "properties": {
                    "pi": {"type": "number", "minimum": 0},
                    "d": _vec,
                    "f": _vec,
                    "h": _vec,
                    **{k: _triplet for k in "HFBGE"},
                },
            },
        },
    },
}


def _to_triplet(m) -> dict:
    coo = sp.coo_matrix(m)
    return {"shape": list(coo.shape), "row": coo.row.tolist(), "col": coo.col.tolist(), "val": coo.data.tolist()}


def _from_triplet(doc, where) -> sp.csr_matrix:
    shape = tuple(doc["shape"])
    if not len(doc["row"]) == len(doc["col"]) == len(doc["val"]):
        raise InputError(f"{where}: row, col and val lengths differ")
    try:
        return sp.csr_matrix((doc["val"], (doc["row"], doc["col"])), shape=shape)
    except ValueError as exc:
        raise InputError(f"{where}: {exc}") from exc


def compact_to_dict(inst: CompactInstance, x_bounds=None) -> dict:
    out = {
        "name": inst.name,
        "c": inst.c.tolist(),
        "upper_A": _to_triplet(inst.upper_A),
        "upper_b": inst.upper_b.tolist(),
        "upper_eq": [bool(v) for v in inst.upper_eq],
        "n_binary": inst.n_binary,
        "n_integer": inst.n_integer,
        "scenarios": [
            {"pi": b.pi, "d": b.d.tolist(), "f": b.f.tolist(), "h": b.h.tolist(), **{k: _to_triplet(getattr(b, k)) for k in "HFBGE"}}
            for b in inst.scenarios
        ],
    }
    if x_bounds is not None:
        out["x_bounds"] = [[int(a), int(b)] for a, b in x_bounds]
    return out


def compact_from_dict(doc: dict, source: str = "instance") -> tuple[CompactInstance, list | None]:
    _validate(doc, COMPACT_SCHEMA, source)
    blocks = []
    for s, b in enumerate(doc["scenarios"]):
        mats = {k: _from_triplet(b[k], f"{source}: scenarios[{s}].{k}") for k in "HFBGE"}
        blocks.append(ScenarioBlock.from_arrays(b["pi"], b["d"], b["f"], b["h"], **mats))
    inst = CompactInstance(
        doc["c"],
        _from_triplet(doc["upper_A"], f"{source}: upper_A"),
        doc["upper_b"],
        doc["n_binary"],
        doc["n_integer"],
        blocks,
        upper_eq=doc.get("upper_eq"),
        name=doc.get("name", Path(source).stem),
    )
    bounds = doc.get("x_bounds")
    return inst, [tuple(b) for b in bounds] if bounds is not None else None


def load_compact(path) -> CompactInstance:
    return load_compact_with_bounds(path)[0]


def _npz_arrays(inst: CompactInstance, x_bounds) -> dict:
    out = {"c": inst.c, "upper_b": inst.upper_b, "upper_eq": inst.upper_eq,
           "sizes": np.array([inst.n_binary, inst.n_integer, inst.num_scenarios]),
           "name": np.array(inst.name), "pi": inst.probabilities}

    def put(prefix, m):
        coo = sp.coo_matrix(m)
        out[f"{prefix}_shape"] = np.array(coo.shape)
        out[f"{prefix}_row"], out[f"{prefix}_col"], out[f"{prefix}_val"] = coo.row, coo.col, coo.data

    put("upper_A", inst.upper_A)
    for s, b in enumerate(inst.scenarios):
        for k in "dfh":
            out[f"s{s}_{k}"] = getattr(b, k)
        for k in "HFBGE":
            put(f"s{s}_{k}", getattr(b, k))
    if x_bounds is not None:
        out["x_bounds"] = np.asarray(x_bounds, dtype=np.int64)
    return out


def _npz_document(z) -> dict:
    def get(prefix):
        return {"shape": z[f"{prefix}_shape"].tolist(), "row": z[f"{prefix}_row"].tolist(),
                "col": z[f"{prefix}_col"].tolist(), "val": z[f"{prefix}_val"].tolist()}

    nb, ni, ns = (int(v) for v in z["sizes"])
    doc = {
        "name": str(z["name"]), "c": z["c"].tolist(), "upper_A": get("upper_A"), "upper_b": z["upper_b"].tolist(),
        "upper_eq": [bool(v) for v in z["upper_eq"]], "n_binary": nb, "n_integer": ni,
        "scenarios": [
            {"pi": float(z["pi"][s]), **{k: z[f"s{s}_{k}"].tolist() for k in "dfh"}, **{k: get(f"s{s}_{k}") for k in "HFBGE"}}
            for s in range(ns)
        ],
    }
    if "x_bounds" in z:
        doc["x_bounds"] = z["x_bounds"].tolist()
    return doc


def load_compact_with_bounds(path) -> tuple[CompactInstance, list | None]:
    path = Path(path)
    if path.suffix == ".npz":
        try:
            with np.load(path, allow_pickle=False) as z:
                doc = _npz_document(z)
        except (OSError, KeyError, ValueError) as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
        return compact_from_dict(doc, str(path))
    return compact_from_dict(_read_json(path), str(path))


def save_compact(inst: CompactInstance, path, x_bounds=None) -> Path:
    path = Path(path)
    if path.suffix == ".npz":
        np.savez_compressed(path, **_npz_arrays(inst, x_bounds))
    else:
        path.write_text(json.dumps(compact_to_dict(inst, x_bounds)))
    return path


def is_compact_document(path) -> bool:
    path = Path(path)
    if path.suffix == ".npz":
        return True
    doc = _read_json(path)
    return isinstance(doc, dict) and "upper_A" in doc


# -- results -----------------------------------------------------------------


def _fmt(v: float) -> str:
    # repr keeps full precision with a dot decimal regardless of locale
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def emit_trace(result: EngineResult, path) -> Path:
    if not result.trace:
        raise ValueError("result has no iterations to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for rec in result.trace:
            w.writerow([rec.iteration, _fmt(rec.lb), _fmt(rec.ub), _fmt(relative_gap(rec.lb, rec.ub)),
                        _fmt(rec.master_s), _fmt(rec.sp_total_s)])
    return path


def read_trace(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "iter" else float(v)) for k, v in r.items()} for r in rows]


def result_to_dict(result: EngineResult) -> dict:
    return {
        "status": result.status,
        "mode": result.mode,
        "objective": _json_float(result.objective),
        "lb": _json_float(result.lb),
        "ub": _json_float(result.ub),
        "iterations": result.iterations,
        "wall_time_s": result.wall_time,
        "escalations": result.escalations,
        "x": None if result.x is None else np.asarray(result.x).tolist(),
        "xi": [np.asarray(v).tolist() for v in result.xi],
        "y": [np.asarray(v).tolist() for v in result.y],
    }


def _json_float(v: float):
    return v if math.isfinite(v) else str(v)


def save_solution(result: EngineResult, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(result_to_dict(result)))
    return path


SOLUTION_SCHEMA = {
    "type": "object",
    "required": ["x", "y"],
    "properties": {
        "x": {"oneOf": [_vec, {"type": "null"}]},
        "y": {"type": "array", "items": _vec},
        "xi": {"type": "array", "items": _vec},
        "objective": {"oneOf": [_num, {"type": "string"}]},
    },
}


def load_solution(path) -> PlanningSolution:
    doc = _read_json(path)
    _validate(doc, SOLUTION_SCHEMA, str(path))
    if doc["x"] is None:
        raise InputError(f"{path}: solution carries no plan")
    obj = doc.get("objective")
    return PlanningSolution(
        np.asarray(doc["x"], dtype=float),
        [np.asarray(v, dtype=float) for v in doc["y"]],
        [np.asarray(v, dtype=float) for v in doc.get("xi", [])],
        float(obj) if obj is not None else None,
    )


def load_plan(path, n_x: int) -> np.ndarray:
    """An investment vector from a bare JSON list or a solution file."""
    doc = _read_json(path)
    x = doc.get("x") if isinstance(doc, dict) else doc
    if not isinstance(x, list) or len(x) != n_x or not all(isinstance(v, (int, float)) for v in x):
        raise InputError(f"{path}: expected an investment vector of length {n_x}")
    return np.asarray(x, dtype=float)


def write_rows(rows: list[dict], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in r.items()})
    return path


def metrics_row(case_name: str, m: PlanningMetrics) -> dict:
    row = {"case": case_name}
    row.update(m.as_row())
    return row
