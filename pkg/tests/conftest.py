import functools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from trirobust.golden import golden_suite as build_golden_suite
from trirobust.nhemp import (
    DduCoefficients,
    DistributionNetwork,
    NhempCase,
    ScenarioSet,
    ZonePartition,
    compile_case,
)
from trirobust.nhemp.cases import default_catalog

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@functools.lru_cache(maxsize=None)
def golden_suite():
    return tuple(build_golden_suite())


def demand_case(ddu_on: bool = True) -> NhempCase:
    """Two zones with one candidate each and a single one-hour period.

    Bounds 10..40 and 10..30 per zone, 35..55 on the total; slopes
    (5, 8)/(2, 4) per zone and 8/2 on the total.
    """
    net = DistributionNetwork(3, [(0, 1), (0, 2)], [0.4, 0.4], [0.2, 0.2], [800.0, 800.0], [1, 2], s_lv=500.0, s_mv=1500.0)
    cat = default_catalog({"pv": (0, 1), "wt": (0, 1), "bb": (0, 1), "elz": (0, 1), "ht": (0, 1), "hd": (0, 3)})
    scen = ScenarioSet(
        pi=[1.0],
        res_factor=np.full((1, 2, 2, 1), 0.5),
        load=np.array([[[0.0], [80.0], [60.0]]]),
        load_angle=[0.0, 0.2, 0.2],
        price_import=[[0.08]],
        price_retail=[[0.12]],
        price_h2_buy=8.0, price_h2_sell=9.304, penalty_ls=1.0,
        g_pur_cap=np.full((1, 2, 1), 20.0),
        dt=24.0,
    )
    k = 1.0 if ddu_on else 0.0
    ddu = DduCoefficients(
        xi_hi=[[[40.0], [30.0]]], xi_lo=[[[10.0], [10.0]]],
        gamma_hi=k * np.array([[5.0], [8.0]]), gamma_lo=k * np.array([[2.0], [4.0]]),
        zeta_hi=[[55.0]], zeta_lo=[[35.0]],
        alpha_hi=[8.0 * k], alpha_lo=[2.0 * k],
    )
    return NhempCase("demand-band", net, ZonePartition([[1], [2]]), cat, scen, ddu)


def demand_plan(layout, hd=(2, 1)) -> np.ndarray:
    x = np.zeros(7 * layout.n_cand)
    x[layout.x["u"]] = 1.0
    x[layout.x["n"]] = hd
    return x


@pytest.fixture(scope="session")
def demand_ddu():
    inst, lay = compile_case(demand_case(True))
    return inst, lay, demand_plan(lay)


@pytest.fixture(scope="session")
def demand_diu():
    inst, lay = compile_case(demand_case(False))
    return inst, lay, demand_plan(lay)


@pytest.fixture(scope="session")
def golden():
    return golden_suite()


def vertex_set(rows, digits=9):
    return {tuple(round(float(v), digits) + 0.0 for v in r) for r in rows}


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'} - {detail}")
