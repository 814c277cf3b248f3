import csv
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trirobust import engine, io
from trirobust.engine import EngineResult, IterationRecord
from trirobust.golden import random_instance
from trirobust.nhemp import compile_case, small_case, synthetic_33bus, toy_case


def same_instance(a, b):
    assert np.array_equal(a.c, b.c) and np.array_equal(a.upper_b, b.upper_b)
    assert np.array_equal(a.upper_eq, b.upper_eq)
    assert (a.upper_A != b.upper_A).nnz == 0
    assert (a.n_binary, a.n_integer, a.num_scenarios) == (b.n_binary, b.n_integer, b.num_scenarios)
    for p, q in zip(a.scenarios, b.scenarios):
        assert p.pi == q.pi
        for k in "dfh":
            assert np.array_equal(getattr(p, k), getattr(q, k))
        for k in "HFBGE":
            assert (getattr(p, k) != getattr(q, k)).nnz == 0


def fake_result(lbs, ubs):
    trace = [IterationRecord(k + 1, lb, ub, 0.0, 0.01 * k, 0.02, np.zeros(1), np.zeros(1), 1)
             for k, (lb, ub) in enumerate(zip(lbs, ubs))]
    return EngineResult("converged", np.zeros(1), ubs[-1], lbs[-1], ubs[-1], trace, [], [], 0.1, "pccg")


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_compact_round_trip(tmp_path, suffix):
    g = random_instance(11)
    path = io.save_compact(g.instance, tmp_path / f"inst{suffix}", g.x_bounds)
    inst, bounds = io.load_compact_with_bounds(path)
    same_instance(g.instance, inst)
    assert bounds == [tuple(b) for b in g.x_bounds]
    assert io.is_compact_document(path)


def test_compiled_case_round_trip(tmp_path):
    inst, _ = compile_case(small_case(2))
    same_instance(inst, io.load_compact(io.save_compact(inst, tmp_path / "big.npz")))


@pytest.mark.parametrize("case", [toy_case(), small_case(4), synthetic_33bus(num_scenarios=2)], ids=lambda c: c.name)
def test_case_round_trip(tmp_path, case):
    path = io.save_case(case, tmp_path / "case.json")
    back = io.load_case(path)
    assert not io.is_compact_document(path)
    same_instance(compile_case(case)[0], compile_case(back)[0])
    assert back.config == case.config


def test_case_schema_errors_name_the_field(tmp_path):
    doc = io.case_to_dict(toy_case())
    del doc["scenarios"][0]["pi"]
    with pytest.raises(io.InputError, match=r"scenarios\[0\]\.pi: required field is missing"):
        io.case_from_dict(doc)
    doc = io.case_to_dict(toy_case())
    doc["zones"][0]["nodes"] = [7]
    with pytest.raises(io.InputError, match="unknown node 7"):
        io.case_from_dict(doc)
    doc = io.case_to_dict(toy_case())
    doc["periods"]["dt"] = "four"
    with pytest.raises(io.InputError, match="periods.dt"):
        io.case_from_dict(doc)


def test_compact_schema_errors(tmp_path):
    doc = io.compact_to_dict(random_instance(1).instance)
    doc["scenarios"][0]["H"]["val"].append(1.0)
    with pytest.raises(io.InputError, match="lengths differ"):
        io.compact_from_dict(doc)
    doc = io.compact_to_dict(random_instance(1).instance)
    del doc["c"]
    with pytest.raises(io.InputError, match="c: required field is missing"):
        io.compact_from_dict(doc)


def test_unreadable_inputs(tmp_path):
    with pytest.raises(io.InputError, match="cannot read"):
        io.load_case(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(io.InputError, match="invalid JSON at line 1"):
        io.load_case(bad)
    junk = tmp_path / "junk.npz"
    junk.write_bytes(b"nope")
    with pytest.raises(io.InputError):
        io.load_compact(junk)


def test_trace_file_layout(tmp_path):
    g = random_instance(3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = engine.run(g.instance, engine.EngineConfig(epsilon=0.0))
    path = io.emit_trace(res, tmp_path / "trace.csv")
    with path.open() as fh:
        header = next(csv.reader(fh))
    assert header == ["iter", "lb", "ub", "gap", "master_s", "sp_total_s"]
    rows = io.read_trace(path)
    assert [r["iter"] for r in rows] == list(range(1, res.iterations + 1))
    for r, rec in zip(rows, res.trace):
        assert r["lb"] == rec.lb and r["ub"] == rec.ub
        assert r["gap"] == engine.relative_gap(r["lb"], r["ub"])


def test_trace_infinite_bounds(tmp_path):
    rows = io.read_trace(io.emit_trace(fake_result([-math.inf, 1.0], [math.inf, 2.0]), tmp_path / "t.csv"))
    assert rows[0]["lb"] == -math.inf and rows[0]["ub"] == math.inf
    assert rows[1]["gap"] == 1.0


def test_empty_trace_refused(tmp_path):
    res = fake_result([0.0], [0.0])
    res.trace.clear()
    with pytest.raises(ValueError):
        io.emit_trace(res, tmp_path / "t.csv")


@given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=1, max_size=5))
def test_trace_numbers_round_trip_exactly(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("trace") / "t.csv"
    rows = io.read_trace(io.emit_trace(fake_result(values, values), path))
    assert [r["lb"] for r in rows] == [float(v) for v in values]
    with path.open() as fh:
        text = fh.read()
    # dot decimals only; no thousands separators, so commas are field breaks
    assert all(line.count(",") == 5 for line in text.splitlines())


def test_solution_round_trip(tmp_path):
    case = toy_case()
    inst, _ = compile_case(case)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = engine.run(inst, engine.EngineConfig(sp_form="ou"))
    path = io.save_solution(res, tmp_path / "solution.json")
    sol = io.load_solution(path)
    assert np.array_equal(sol.x, res.x) and sol.objective == res.objective
    assert all(np.array_equal(a, b) for a, b in zip(sol.y, res.y))
    assert np.array_equal(io.load_plan(path, inst.n_x), res.x)
    bare = tmp_path / "plan.json"
    bare.write_text(json.dumps(res.x.tolist()))
    assert np.array_equal(io.load_plan(bare, inst.n_x), res.x)
    with pytest.raises(io.InputError):
        io.load_plan(bare, inst.n_x + 1)


def test_write_rows(tmp_path):
    path = io.write_rows([{"chi": 0.1, "status": "converged", "n": 3}], tmp_path / "r.csv")
    assert path.read_text() == "chi,status,n\n0.1,converged,3\n"
