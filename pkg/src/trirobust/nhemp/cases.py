"""Documented synthetic planning cases.

The catalog follows published component data (PV 153.67 $/kW/yr at 80 kW
per unit, ELZ efficiency 76 %, HD service rate 108 kg/h, and so on);
profiles, prices, line caps and count bounds are synthetic and fixed by
seed. Periods are aggregated blocks of ``dt`` hours.
"""

from __future__ import annotations

import math

import numpy as np

from .types import (
    ComponentCatalog,
    DduCoefficients,
    DistributionNetwork,
    NhempCase,
    ScenarioSet,
    ZonePartition,
)

# (from, to, r ohm, x ohm), nodes renumbered from 0
IEEE33_LINES = [
    (0, 1, 0.0922, 0.0470), (1, 2, 0.4930, 0.2511), (2, 3, 0.3660, 0.1864), (3, 4, 0.3811, 0.1941),
    (4, 5, 0.8190, 0.7070), (5, 6, 0.1872, 0.6188), (6, 7, 0.7114, 0.2351), (7, 8, 1.0300, 0.7400),
    (8, 9, 1.0440, 0.7400), (9, 10, 0.1966, 0.0650), (10, 11, 0.3744, 0.1238), (11, 12, 1.4680, 1.1550),
    (12, 13, 0.5416, 0.7129), (13, 14, 0.5910, 0.5260), (14, 15, 0.7463, 0.5450), (15, 16, 1.2890, 1.7210),
    (16, 17, 0.7320, 0.5740), (1, 18, 0.1640, 0.1565), (18, 19, 1.5042, 1.3554), (19, 20, 0.4095, 0.4784),
    (20, 21, 0.7089, 0.9373), (2, 22, 0.4512, 0.3083), (22, 23, 0.8980, 0.7091), (23, 24, 0.8960, 0.7011),
    (5, 25, 0.2030, 0.1034), (25, 26, 0.2842, 0.1447), (26, 27, 1.0590, 0.9337), (27, 28, 0.8042, 0.7006),
    (28, 29, 0.5075, 0.2585), (29, 30, 0.9744, 0.9630), (30, 31, 0.3105, 0.3619), (31, 32, 0.3410, 0.5302),
]
# peak active / reactive load per node (kW, kvar)
IEEE33_LOADS = [
    (0, 0), (100, 60), (90, 40), (120, 80), (60, 30), (60, 20), (200, 100), (200, 100), (60, 20),
    (60, 20), (45, 30), (60, 35), (60, 35), (120, 80), (60, 10), (60, 20), (60, 20), (90, 40),
    (90, 40), (90, 40), (90, 40), (90, 40), (90, 50), (420, 200), (420, 200), (60, 25), (60, 25),
    (60, 20), (120, 70), (200, 600), (150, 70), (210, 100), (60, 40),
]

# induced demand slopes (kg/h per HD) for zones A, B, C over six 4-hour blocks
GAMMA_HI = np.array([[30, 40, 60, 60, 40, 30], [25, 25, 45, 45, 35, 30], [20, 30, 40, 40, 30, 20]], dtype=float)
GAMMA_LO = np.array([[25, 30, 40, 40, 35, 25], [20, 20, 35, 35, 25, 20], [15, 25, 30, 30, 25, 15]], dtype=float)

PV_SHAPE = np.array([0.0, 0.35, 0.85, 0.75, 0.15, 0.0])
WT_SHAPE = np.array([0.55, 0.45, 0.30, 0.30, 0.40, 0.55])
LOAD_SHAPE = np.array([0.55, 0.75, 0.90, 0.90, 1.00, 0.75])
PRICE_IMPORT = np.array([0.045, 0.070, 0.095, 0.095, 0.110, 0.070])
PRICE_RETAIL = np.array([0.080, 0.110, 0.140, 0.140, 0.160, 0.110])


def default_catalog(bounds: dict | None = None) -> ComponentCatalog:
    return ComponentCatalog(
        c_hem=20000.0,
        c_pv=153.67, p_pv=80.0,
        c_wt=225.79, p_wt=200.0,
        c_bb=51.76, p_bb=90.0, e_bb=150.0, eta_ch=0.9, eta_dis=0.9, dod=0.85, kappa=0.001,
        c_elz=41.05, p_elz=200.0, eta_elz=0.76, lhv=33.33,
        c_ht=56.76, p_ht=100.0, phi_ht=0.02,
        c_hd=29974.55, sr=108.0,
        bounds=bounds or {"pv": (0, 6), "wt": (0, 2), "bb": (0, 3), "elz": (0, 6), "ht": (0, 6), "hd": (0, 3)},
        res_angle_min=-math.acos(0.95),
        res_angle_max=math.acos(0.95),
    )


def _scenarios(rng, n_scen, n_nodes, n_cand, n_zones, peak, load_angle, dt, T=6, shapes=None):
    pv, wt, ld, imp, ret = shapes or (PV_SHAPE, WT_SHAPE, LOAD_SHAPE, PRICE_IMPORT, PRICE_RETAIL)
    pi = rng.dirichlet(np.full(n_scen, 4.0)) if n_scen > 1 else np.ones(1)
    res = np.empty((n_scen, 2, n_cand, T))
    load = np.empty((n_scen, n_nodes, T))
    for s in range(n_scen):
        res[s, 0] = np.clip(pv[None, :] * rng.uniform(0.7, 1.1, (n_cand, 1)), 0, 1)
        res[s, 1] = np.clip(wt[None, :] * rng.uniform(0.6, 1.3, (n_cand, 1)), 0, 1)
        load[s] = peak[:, None] * ld[None, :] * rng.uniform(0.9, 1.1)
    return ScenarioSet(
        pi=pi / pi.sum(),
        res_factor=np.round(res, 4),
        load=np.round(load, 3),
        load_angle=load_angle,
        price_import=np.tile(imp, (n_scen, 1)),
        price_retail=np.tile(ret, (n_scen, 1)),
        price_h2_buy=8.0,
        price_h2_sell=9.304,
        penalty_ls=1.0,
        g_pur_cap=np.full((n_scen, n_zones, T), 20.0),
        dt=dt,
        sigma=365.0,
    )


def synthetic_33bus(num_scenarios: int = 3, seed: int = 7, load_scale: float = 0.5) -> NhempCase:
    """33-node radial feeder, three refueling zones with two candidates each.

    Loads are the classic feeder peaks scaled by ``load_scale`` so that the
    10 kV band stays feasible; six 4-hour periods.
    """
    rng = np.random.default_rng(seed)
    n = 33
    r = [l[2] for l in IEEE33_LINES]
    xl = [l[3] for l in IEEE33_LINES]
    zones = [[6, 24], [14, 17], [29, 32]]
    cand = [i for z in zones for i in z]
    net = DistributionNetwork(
        n, [(a, b) for a, b, _, _ in IEEE33_LINES], r, xl, np.full(32, 5000.0),
        cand, s_lv=1500.0, s_mv=6000.0, U0=10.0, U_min=9.3, U_max=10.7,
    )
    loads = np.array(IEEE33_LOADS, dtype=float)
    peak = loads[:, 0] * load_scale
    angle = np.arctan2(loads[:, 1], np.maximum(loads[:, 0], 1e-9))
    scen = _scenarios(rng, num_scenarios, n, len(cand), 3, peak, angle, dt=4.0)
    S = num_scenarios
    base_lo = np.round(rng.uniform(8.0, 12.0, (S, 3, 1)) * np.ones((1, 1, 6)), 1)
    base_hi = base_lo + 30.0
    ddu = DduCoefficients(
        xi_hi=base_hi, xi_lo=base_lo, gamma_hi=GAMMA_HI, gamma_lo=GAMMA_LO,
        zeta_hi=base_hi.sum(axis=1) - 10.0, zeta_lo=base_lo.sum(axis=1) + 5.0,
    )
    return NhempCase("synthetic-33bus", net, ZonePartition(zones), default_catalog(), scen, ddu)


def toy_case(periods: int = 2) -> NhempCase:
    """Two nodes, one zone, one scenario; the day is split into ``periods`` blocks."""
    T = periods
    net = DistributionNetwork(2, [(0, 1)], [0.5], [0.3], [800.0], [1], s_lv=500.0, s_mv=1000.0)
    cat = default_catalog({"pv": (0, 2), "wt": (0, 1), "bb": (0, 1), "elz": (0, 2), "ht": (0, 2), "hd": (0, 2)})
    pick = np.linspace(0, 5, T).round().astype(int)
    scen = ScenarioSet(
        pi=[1.0],
        res_factor=np.stack([PV_SHAPE[pick], WT_SHAPE[pick]])[None, :, None, :],
        load=np.array([[np.zeros(T), 150.0 * LOAD_SHAPE[pick]]]),
        load_angle=[0.0, 0.2],
        price_import=PRICE_IMPORT[pick][None],
        price_retail=PRICE_RETAIL[pick][None],
        price_h2_buy=8.0, price_h2_sell=9.304, penalty_ls=1.0,
        g_pur_cap=np.full((1, 1, T), 10.0),
        dt=24.0 / T,
    )
    ddu = DduCoefficients(
        xi_hi=np.full((1, 1, T), 40.0), xi_lo=np.full((1, 1, T), 10.0),
        gamma_hi=np.full((1, T), 30.0), gamma_lo=np.full((1, T), 20.0),
        zeta_hi=np.full((1, T), 40.0), zeta_lo=np.full((1, T), 10.0),
    )
    return NhempCase("toy", net, ZonePartition([[1]]), cat, scen, ddu)


def small_case(seed: int) -> NhempCase:
    """Random small feeder for cross-checks: 4-6 nodes, 1-2 zones, 1-2 scenarios, 2 periods."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 7))
    lines = [(int(rng.integers(0, j)), j) for j in range(1, n)]
    r = np.round(rng.uniform(0.2, 1.0, n - 1), 3)
    xl = np.round(rng.uniform(0.1, 0.8, n - 1), 3)
    n_zones = int(rng.integers(1, 3))
    cand = sorted(int(i) for i in rng.choice(np.arange(1, n), size=min(n - 1, n_zones + int(rng.integers(0, 2))), replace=False))
    zones = [cand[k::n_zones] for k in range(n_zones)]
    net = DistributionNetwork(n, lines, r, xl, np.full(n - 1, 1500.0), cand, s_lv=600.0, s_mv=2500.0)
    cat = default_catalog({"pv": (0, 2), "wt": (0, 1), "bb": (0, 1), "elz": (0, 2), "ht": (0, 2), "hd": (0, 2)})
    T = 2
    pick = np.array([2, 4])
    shapes = (PV_SHAPE[pick], WT_SHAPE[pick], LOAD_SHAPE[pick], PRICE_IMPORT[pick], PRICE_RETAIL[pick])
    peak = np.r_[0.0, np.round(rng.uniform(50.0, 200.0, n - 1), 0)]
    angle = np.r_[0.0, rng.uniform(0.1, 0.5, n - 1)]
    S = int(rng.integers(1, 3))
    scen = _scenarios(rng, S, n, len(cand), n_zones, peak, angle, dt=12.0, T=T, shapes=shapes)
    lo = np.round(rng.uniform(5.0, 15.0, (S, n_zones, T)), 1)
    hi = lo + np.round(rng.uniform(10.0, 30.0, (S, n_zones, T)), 1)
    g_lo = np.round(rng.uniform(5.0, 25.0, (n_zones, T)), 1)
    g_hi = g_lo + np.round(rng.uniform(0.0, 15.0, (n_zones, T)), 1)
    ddu = DduCoefficients(xi_hi=hi, xi_lo=lo, gamma_hi=g_hi, gamma_lo=g_lo)
    return NhempCase(f"small-{seed}", net, ZonePartition(zones), cat, scen, ddu)


def golden_cases(count: int = 6) -> list[NhempCase]:
    return [small_case(k) for k in range(count)]
