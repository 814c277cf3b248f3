import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from trirobust.instance import Polytope, realize_ddu_polytope, strip_decision_dependence
from trirobust.oracle import (
    DualVertexTable,
    EmptyPolytopeError,
    OracleGuardError,
    check_vertex,
    dense_lp_min,
    enumerate_polytope_vertices,
    enumerate_upper_level,
    exhaustive_trilevel_solve,
    is_extreme_dual,
    iteration_bound,
    worst_case_enumeration,
)
from trirobust.golden import capacity_expansion_instance, micro_instance, random_instance

from conftest import vertex_set

DDU_VERTICES = {(14.0, 27.0), (14.0, 38.0), (41.0, 38.0), (50.0, 29.0), (50.0, 14.0), (27.0, 14.0)}
DIU_VERTICES = {(10.0, 25.0), (10.0, 30.0), (25.0, 30.0), (40.0, 15.0), (40.0, 10.0), (25.0, 10.0)}


def test_demand_polygon_with_induced_terms(demand_ddu):
    inst, _, x = demand_ddu
    verts = enumerate_polytope_vertices(realize_ddu_polytope(inst, 0, x))
    assert len(verts) == 6
    assert vertex_set(verts) == DDU_VERTICES


def test_demand_polygon_static(demand_diu):
    inst, _, x = demand_diu
    verts = enumerate_polytope_vertices(realize_ddu_polytope(inst, 0, x))
    assert vertex_set(verts) == DIU_VERTICES


def test_static_polygon_ignores_plan(demand_ddu):
    inst, lay, x = demand_ddu
    diu = strip_decision_dependence(inst)
    for hd in ((0, 0), (2, 1), (3, 3)):
        y = x.copy()
        y[lay.x["n"]] = hd
        assert vertex_set(enumerate_polytope_vertices(realize_ddu_polytope(diu, 0, y))) == vertex_set(
            enumerate_polytope_vertices(realize_ddu_polytope(diu, 0, np.zeros_like(x)))
        )


def test_check_vertex_on_polygon(demand_ddu):
    inst, _, x = demand_ddu
    poly = realize_ddu_polytope(inst, 0, x)
    for v in DDU_VERTICES:
        assert check_vertex(poly, v)
    assert not check_vertex(poly, (14.0, 30.0))  # on an edge
    assert not check_vertex(poly, (30.0, 25.0))  # interior
    with pytest.raises(ValueError):
        check_vertex(poly, (0.0, 0.0))


def test_unit_square():
    sq = Polytope.nonnegative(np.eye(2), [1.0, 1.0])
    assert vertex_set(enumerate_polytope_vertices(sq)) == {(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)}


def test_empty_polytope_has_no_vertices():
    p = Polytope.nonnegative(np.array([[1.0, 1.0]]), [-1.0])
    assert len(enumerate_polytope_vertices(p)) == 0


def test_dimension_guard():
    p = Polytope.nonnegative(np.ones((1, 9)), [1.0])
    with pytest.raises(OracleGuardError):
        enumerate_polytope_vertices(p)


def test_upper_level_guard():
    g = capacity_expansion_instance(0)
    assert len(enumerate_upper_level(g.instance, g.x_bounds)) == 100
    with pytest.raises(OracleGuardError):
        enumerate_upper_level(g.instance, [(0, 400)] * g.instance.n_x)


@st.composite
def boxed_polytopes(draw, max_dim=3):
    n = draw(st.integers(1, max_dim))
    m = draw(st.integers(0, 3))
    coef = st.integers(-3, 3)
    A = np.array([[draw(coef) for _ in range(n)] for _ in range(m)], dtype=float).reshape(m, n)
    b = np.array([draw(st.integers(1, 8)) for _ in range(m)], dtype=float)
    box = np.array([draw(st.integers(1, 5)) for _ in range(n)], dtype=float)
    return Polytope.nonnegative(np.vstack([A, np.eye(n)]), np.concatenate([b, box]))


@given(boxed_polytopes(), st.lists(st.integers(-5, 5), min_size=3, max_size=3))
def test_vertices_attain_lp_optimum(poly, w):
    # 0 is feasible, so every drawn polytope is a nonempty polytope
    c = np.array(w[: poly.dim], dtype=float)
    verts = enumerate_polytope_vertices(poly)
    lp = linprog(-c, A_ub=poly.A, b_ub=poly.b, bounds=[(None, None)] * poly.dim, method="highs")
    assert lp.status == 0
    assert math.isclose((verts @ c).max(), -lp.fun, rel_tol=1e-9, abs_tol=1e-9)


@given(boxed_polytopes())
def test_every_vertex_passes_rank_test(poly):
    verts = enumerate_polytope_vertices(poly)
    assert len(verts) >= 1
    for v in verts:
        assert check_vertex(poly, v)
    if len(verts) > 1:
        assert not check_vertex(poly, verts.mean(axis=0))


@given(boxed_polytopes(), st.integers(0, 4))
def test_worst_case_monotone_under_inclusion(poly, shrink):
    # tightening the box can only lower the maximum of a linear function
    c = np.arange(1, poly.dim + 1, dtype=float)
    inner = Polytope(poly.A, poly.b - np.r_[np.zeros(len(poly.b) - 2 * poly.dim), np.full(poly.dim, shrink * 0.2), np.zeros(poly.dim)], poly.n_structural)
    outer_v = enumerate_polytope_vertices(poly)
    inner_v = enumerate_polytope_vertices(inner)
    if len(inner_v):
        assert (inner_v @ c).max() <= (outer_v @ c).max() + 1e-9


def test_extreme_dual_rank_test():
    B = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    d = np.array([1.0, 1.0])
    assert is_extreme_dual(B, d, [0.0, 0.0, 0.0])
    assert is_extreme_dual(B, d, [1.0, 0.0, 0.0])
    assert is_extreme_dual(B, d, [0.0, 0.0, 1.0])
    assert not is_extreme_dual(B, d, [0.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        is_extreme_dual(B, d, [2.0, 0.0, 0.0])


def test_dual_table_matches_lp_values():
    g = random_instance(3)
    blk = g.instance.scenarios[0]
    table = DualVertexTable(blk)
    rng = np.random.default_rng(0)
    for _ in range(10):
        # perturb only demand rows so the capacity rows stay satisfiable at y = 0
        rhs = blk.f + rng.uniform(-1.0, 2.0, blk.m_y) * (blk.f >= 0)
        val, _ = dense_lp_min(blk.d, blk.B.toarray(), rhs)
        assert math.isclose(table.values(rhs)[0], val, rel_tol=1e-9, abs_tol=1e-9)


def test_worst_case_enumeration_reports_empty():
    inst = random_instance(5, n_xi=1).instance
    # xi <= -1 and xi >= 5
    bad = dataclasses.replace(inst.scenarios[0], h=np.array([-1.0, -5.0]))
    with pytest.raises(EmptyPolytopeError):
        worst_case_enumeration(inst.replace(scenarios=(bad,) + tuple(inst.scenarios[1:])), 0, np.zeros(inst.n_x))


def test_exhaustive_methods_agree():
    for seed in range(6):
        g = random_instance(seed)
        x1, v1 = exhaustive_trilevel_solve(g.instance, g.x_bounds, method="dual")
        x2, v2 = exhaustive_trilevel_solve(g.instance, g.x_bounds, method="lp")
        assert math.isclose(v1, v2, rel_tol=1e-7, abs_tol=1e-7)


def test_iteration_bound_counts_bases():
    g = micro_instance(0)
    inst = g.instance
    want = 1
    for blk in inst.scenarios:
        want *= math.comb(blk.n_xi + blk.m_xi, blk.m_xi)
    assert iteration_bound(inst) == want
    # one box-bounded coordinate: C(1 + 2, 2) = 3 per scenario
    assert all(blk.n_xi == 1 and blk.m_xi == 2 for blk in inst.scenarios)
    assert iteration_bound(inst) == 3 ** inst.num_scenarios
