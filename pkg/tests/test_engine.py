import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from trirobust import engine
from trirobust.engine import BigMWarning, EngineConfig, relative_gap
from trirobust.golden import capacity_expansion_instance, random_instance
from trirobust.instance import CompactInstance, ScenarioBlock
from trirobust.oracle import exhaustive_trilevel_solve


def quiet_run(inst, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return engine.run(inst, cfg)


def close(a, b, rel=1e-6):
    return abs(a - b) <= rel * max(1.0, abs(b))


def test_config_defaults_and_checks():
    cfg = EngineConfig()
    assert (cfg.epsilon, cfg.max_iter, cfg.mode) == (1e-3, 100, "pccg")
    for bad in (dict(epsilon=-1), dict(mode="cg"), dict(eta_floor=-math.inf), dict(M_sp=0), dict(master_check="maybe")):
        with pytest.raises(ValueError):
            EngineConfig(**bad)


def test_config_from_dotted_keys():
    cfg = EngineConfig.from_mapping({
        "engine": {"epsilon": 0.0, "max_iter": 7, "mode": "bccg", "eta_floor": -5.0, "parallel_sp": True},
        "bigm": {"mp": 1e4, "sp": 1e5},
        "milp": {"backend": "scipy", "time_limit_s": 30},
    })
    assert (cfg.epsilon, cfg.max_iter, cfg.mode, cfg.eta_floor, cfg.parallel_sp) == (0.0, 7, "bccg", -5.0, True)
    assert (cfg.M_mp, cfg.M_sp, cfg.backend, cfg.time_limit_s) == (1e4, 1e5, "scipy", 30)
    with pytest.raises(KeyError):
        EngineConfig.from_mapping({"engine.tolerance": 1})


def test_relative_gap():
    assert relative_gap(10.0, 10.0) == 0.0
    assert math.isclose(relative_gap(-10.0, -9.0), 0.1)
    assert relative_gap(0.0, 1.0) == math.inf


@pytest.mark.parametrize("mode", ["pccg", "bccg"])
@pytest.mark.parametrize("seed", [0, 1, 4, 9])
def test_matches_oracle(seed, mode):
    g = random_instance(seed)
    _, ref = exhaustive_trilevel_solve(g.instance, g.x_bounds)
    res = quiet_run(g.instance, EngineConfig(epsilon=0.0, mode=mode))
    assert res.status == engine.CONVERGED
    assert close(res.objective, ref)
    assert g.instance.x_feasible(res.x)


@settings(max_examples=15)
@given(st.integers(0, 200), st.sampled_from(["pccg", "bccg"]), st.sampled_from([0.0, 1e-3]))
def test_trace_bounds_are_monotone(seed, mode, eps):
    g = random_instance(seed)
    res = quiet_run(g.instance, EngineConfig(epsilon=eps, mode=mode))
    assert res.status == engine.CONVERGED
    lb = [r.lb for r in res.trace]
    ub = [r.ub for r in res.trace]
    assert all(b >= a - 1e-12 * max(1.0, abs(a)) for a, b in zip(lb, lb[1:]))
    assert all(b <= a for a, b in zip(ub, ub[1:]))
    assert all(u >= l - 1e-6 * max(1.0, abs(l)) for l, u in zip(lb, ub))
    assert res.ub == res.objective == ub[-1]


@pytest.mark.parametrize("knobs", [dict(M_sp=1.0), dict(M_mp=1.0), dict(M_sp=1.0, M_mp=1.0)])
def test_undersized_big_m_escalates(knobs):
    g = random_instance(1)
    _, ref = exhaustive_trilevel_solve(g.instance, g.x_bounds)
    with pytest.warns(BigMWarning):
        res = engine.run(g.instance, EngineConfig(epsilon=0.0, **knobs))
    assert res.escalations > 0
    assert res.status == engine.CONVERGED and close(res.objective, ref)


def test_iteration_limit():
    g = capacity_expansion_instance(0)
    res = quiet_run(g.instance, EngineConfig(epsilon=0.0, mode="bccg", max_iter=1))
    assert res.status == engine.ITER_LIMIT
    assert res.iterations == 1
    assert res.x is not None and math.isfinite(res.ub)


@pytest.mark.parametrize("check", ["claims", "off"])
def test_master_check_levels(check):
    g = random_instance(4)
    _, ref = exhaustive_trilevel_solve(g.instance, g.x_bounds)
    res = quiet_run(g.instance, EngineConfig(epsilon=0.0, master_check=check))
    assert res.status == engine.CONVERGED and close(res.objective, ref)


def test_parallel_subproblems_agree():
    g = random_instance(7, num_scenarios=3)
    a = quiet_run(g.instance, EngineConfig(epsilon=0.0))
    b = quiet_run(g.instance, EngineConfig(epsilon=0.0, parallel_sp=True))
    assert close(a.objective, b.objective)


def test_seeded_plan_bounds_the_first_iterate():
    g = random_instance(2)
    inst = g.instance
    seed_x = np.zeros(inst.n_x)
    cfg = EngineConfig(epsilon=0.0, seed_x=seed_x)
    seed_value = float(inst.c @ seed_x) + sum(
        blk.pi * engine.solve_scenario_subproblem(inst, s, seed_x, cfg).value for s, blk in enumerate(inst.scenarios)
    )
    res = quiet_run(inst, cfg)
    assert res.trace[0].ub <= seed_value + 1e-9
    with pytest.raises(ValueError, match="seed"):
        quiet_run(inst, EngineConfig(seed_x=np.full(inst.n_x, 0.5)))


def test_empty_uncertainty_set_is_reported():
    # xi <= 4 and xi >= 2 + 3x: empty once x = 1, and buying x pays
    blk = ScenarioBlock.from_arrays(
        1.0, d=[1.0, 5.0], f=[2.0, -3.0], h=[4.0, -2.0], H=[[1.0], [-1.0]], F=[[0.0], [3.0]],
        B=[[1.0, 1.0], [-1.0, 0.0]], G=[[0.0], [0.0]], E=[[-1.0], [0.0]],
    )
    inst = CompactInstance([-20.0], sp.csr_matrix((0, 1)), [], 1, 0, [blk])
    with pytest.raises(engine.SubproblemInfeasible):
        quiet_run(inst, EngineConfig())


def test_invalid_instance_rejected():
    g = random_instance(0)
    bad = g.instance.replace(c=np.ones(g.instance.n_x + 1))
    with pytest.raises(ValueError, match="invalid instance"):
        engine.run(bad)


def test_result_carries_worst_case_operations():
    g = random_instance(5)
    inst = g.instance
    res = quiet_run(inst, EngineConfig(epsilon=0.0))
    assert len(res.xi) == len(res.y) == inst.num_scenarios
    total = float(inst.c @ res.x) + sum(blk.pi * float(blk.d @ y) for blk, y in zip(inst.scenarios, res.y))
    assert close(total, res.objective, 1e-7)
