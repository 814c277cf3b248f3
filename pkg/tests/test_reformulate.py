import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from trirobust import milp
from trirobust.engine import EngineConfig, solve_scenario_subproblem
from trirobust.golden import random_instance
from trirobust.oracle import check_vertex, is_extreme_dual, worst_case_enumeration
from trirobust.instance import realize_ddu_polytope
from trirobust.reformulate import (
    AffineBlock,
    PreconditionError,
    build_ou_block,
    build_sp_milp,
    dual_feasible_set,
    linearize_complementarity,
    mirrored_rows,
    psi_objective,
    solve_dual_lp,
    vertex_basis,
)


def feasible_lam(inst, s, x):
    blk = inst.scenarios[s]
    status, lam = solve_dual_lp(blk, blk.recourse_rhs(x, np.zeros(blk.n_xi)))
    assert lam is not None, status
    return lam


@pytest.mark.parametrize("seed", range(5))
def test_binary_counts(seed):
    g = random_instance(seed)
    inst = g.instance
    blk = inst.scenarios[0]
    x = np.zeros(inst.n_x)
    assert build_sp_milp(inst, 0, x, 1e4, form="kkt").num_binaries == blk.m_y + blk.n_y
    assert build_sp_milp(inst, 0, x, 1e4, form="ou").num_binaries == blk.m_xi + blk.n_xi
    m = milp.MilpModel()
    ou = build_ou_block(m, inst, 0, feasible_lam(inst, 0, x), 1e4, x_value=x)
    assert ou.binaries.size == blk.m_xi + blk.n_xi
    assert m.num_integer == blk.m_xi + blk.n_xi


def _pinned_block(inst, x, parametric):
    m = milp.MilpModel()
    lam = feasible_lam(inst, 0, x)
    if parametric:
        xv = m.add_vars(inst.n_x, kind=milp.INTEGER, ub=10.0)
        m.fix(xv, x)
        ou = build_ou_block(m, inst, 0, lam, 1e4, x_idx=xv, objective=[1.0, 0.0])
    else:
        ou = build_ou_block(m, inst, 0, lam, 1e4, x_value=x, objective=[1.0, 0.0])
    return m, ou


@pytest.mark.parametrize("parametric", [False, True])
@pytest.mark.parametrize("sense", [1.0, -1.0])
def test_ou_block_forces_maximizer(demand_ddu, parametric, sense):
    inst, _, x = demand_ddu
    m, ou = _pinned_block(inst, x, parametric)
    # the block must pin xi_1 at its maximum whichever way the model pushes
    m.set_objective(ou.xi, [sense, sense])
    out = milp.solve(m, integrality_tol=1e-9)
    assert out.optimal
    assert math.isclose(out.x[ou.xi[0]], 50.0, abs_tol=1e-6)
    assert 14.0 - 1e-6 <= out.x[ou.xi[1]] <= 29.0 + 1e-6
    assert all(c.max_product(out.x) <= 1e-6 * 1e4 for c in ou.complementarities)


def test_ou_block_follows_x(demand_ddu):
    inst, lay, x = demand_ddu
    x2 = x.copy()
    x2[lay.x["n"]] = (0, 0)
    m, ou = _pinned_block(inst, x2, True)
    out = milp.solve(m, integrality_tol=1e-9)
    assert math.isclose(out.x[ou.xi[0]], 40.0, abs_tol=1e-6)


def test_ou_block_rejects_infeasible_dual(demand_ddu):
    inst, _, x = demand_ddu
    blk = inst.scenarios[0]
    lam = np.full(blk.m_y, 1e6)
    assert not dual_feasible_set(inst, 0).contains(lam)
    with pytest.raises(PreconditionError):
        build_ou_block(milp.MilpModel(), inst, 0, lam, 1e4, x_value=x)


def test_sp_rejects_infeasible_plan(demand_ddu):
    inst, _, x = demand_ddu
    with pytest.raises(PreconditionError):
        build_sp_milp(inst, 0, x + 0.5, 1e4)
    with pytest.raises(ValueError):
        build_sp_milp(inst, 0, x, 1e4, form="dual")


def test_complementarity_rejects_bad_m():
    m = milp.MilpModel()
    v = m.add_vars(1)
    blk = AffineBlock([(np.eye(1), v)], np.zeros(1))
    with pytest.raises(ValueError):
        linearize_complementarity(m, blk, blk, 0.0)


def test_mirrored_rows():
    H = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    assert mirrored_rows(H, np.array([3.0, -3.0, 2.0, -1.0])) == [(0, 1)]
    assert mirrored_rows(H, np.array([3.0, -3.0, 2.0, -2.0])) == [(0, 1), (2, 3)]
    F = np.array([[1.0], [0.0], [0.0], [0.0]])
    assert mirrored_rows(H, F, np.array([3.0, -3.0, 2.0, -2.0])) == [(2, 3)]


def test_psi_objective_sign():
    g = random_instance(2)
    blk = g.instance.scenarios[0]
    lam = np.ones(blk.m_y)
    assert np.allclose(psi_objective(blk, lam), -(blk.E.T @ lam))


@given(st.integers(0, 39), st.sampled_from(["kkt", "ou"]), st.integers(0, 2 ** 16))
def test_subproblem_value_matches_enumeration(seed, form, draw):
    g = random_instance(seed)
    inst = g.instance
    rng = np.random.default_rng(draw)
    for _ in range(20):
        x = np.array([rng.integers(lo, hi + 1) for lo, hi in g.x_bounds], dtype=float)
        if inst.x_feasible(x):
            break
    else:
        return
    s = int(rng.integers(inst.num_scenarios))
    res = solve_scenario_subproblem(inst, s, x, EngineConfig(sp_form=form))
    ref, _ = worst_case_enumeration(inst, s, x)
    assert math.isclose(res.value, ref, rel_tol=1e-7, abs_tol=1e-7)
    blk = inst.scenarios[s]
    # cut data are vertices of their polyhedra
    assert check_vertex(realize_ddu_polytope(inst, s, x), res.xi)
    assert is_extreme_dual(blk.B, blk.d, res.lam)


def test_vertex_basis_on_square():
    A = np.vstack([np.eye(2), -np.eye(2)])
    b = np.array([1.0, 1.0, 0.0, 0.0])
    assert vertex_basis(A, b, np.array([1.0, 0.0])) == (0, 3)
    assert vertex_basis(A, b, np.array([0.5, 0.0])) is None
