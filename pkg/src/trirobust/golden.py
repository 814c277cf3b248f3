"""Random small instances with known structure, for oracle cross-checks.

Every generated instance has

* a box-bounded upper level (binaries plus at most one small integer),
* uncertainty sets made of a box and a budget row whose bounds widen with
  x and stay nonempty for every x,
* relatively complete recourse: every demand row owns a penalized slack
  column, and capacity rows ``y_j <= u_j + g_j.x`` admit y = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .instance import CompactInstance, ScenarioBlock

SLACK_PENALTY = 10.0


@dataclass
class GoldenInstance:
    instance: CompactInstance
    x_bounds: list
    seed: int


def random_instance(
    seed: int,
    n_xi: int | None = None,
    num_scenarios: int | None = None,
    n_binary: int | None = None,
    n_integer: int | None = None,
    budget: bool | None = None,
    ddu: bool = True,
) -> GoldenInstance:
    rng = np.random.default_rng(seed)
    nb = int(rng.integers(2, 5)) if n_binary is None else n_binary
    ni = int(rng.integers(0, 2)) if n_integer is None else n_integer
    n_x = nb + ni
    int_ub = 3
    n_xi = int(rng.integers(1, 4)) if n_xi is None else n_xi
    S = int(rng.integers(1, 4)) if num_scenarios is None else num_scenarios
    budget = bool(rng.integers(0, 2)) if budget is None else budget
    n_main = int(rng.integers(2, 5))
    m_d = int(rng.integers(1, 4))

    c = np.round(rng.uniform(0.5, 4.0, n_x), 2)
    rows, rhs = [], []
    for j in range(nb, n_x):
        r = np.zeros(n_x)
        r[j] = 1.0
        rows.append(r)
        rhs.append(float(int_ub))
    if nb >= 3 and rng.random() < 0.6:
        rows.append(np.r_[np.ones(nb), np.zeros(ni)])
        rhs.append(float(nb - 1))
    A = np.array(rows).reshape(-1, n_x)
    b = np.array(rhs)

    # uncertainty structure is shared, bounds and slopes vary per scenario
    E_dem = np.round(rng.uniform(0.0, 1.5, (m_d, n_xi)) * (rng.random((m_d, n_xi)) < 0.8), 2)
    E_dem[0, rng.integers(n_xi)] += 1.0
    Bd = np.round(rng.uniform(0.5, 2.0, (m_d, n_main)) * (rng.random((m_d, n_main)) < 0.7), 2)
    for j in range(n_main):
        if not Bd[:, j].any():
            Bd[rng.integers(m_d), j] = 1.0
    n_y = n_main + m_d
    m_y = m_d + n_main
    B = np.zeros((m_y, n_y))
    B[:m_d, :n_main] = Bd
    B[:m_d, n_main:] = np.eye(m_d)
    B[m_d:, :n_main] = -np.eye(n_main)
    G_cap = np.round(rng.uniform(0.0, 3.0, (n_main, n_x)) * (rng.random((n_main, n_x)) < 0.5), 2)

    probs = rng.dirichlet(np.ones(S))
    probs = probs / probs.sum()
    scen = []
    for s in range(S):
        lo = np.round(rng.uniform(0.0, 3.0, n_xi), 1)
        hi = lo + np.round(rng.uniform(0.5, 4.0, n_xi), 1)
        g_lo = np.zeros((n_xi, n_x))
        g_hi = np.zeros((n_xi, n_x))
        if ddu:
            mask = rng.random((n_xi, n_x)) < 0.5
            g_hi = np.round(rng.uniform(0.0, 2.0, (n_xi, n_x)) * mask, 1)
            g_lo = np.round(g_hi * rng.uniform(0.0, 1.0, (n_xi, n_x)), 1)
        H = [np.eye(n_xi), -np.eye(n_xi)]
        h = [hi, -lo]
        F = [-g_hi, g_lo]
        if budget and n_xi > 1:
            beta = float(np.round(lo.sum() + rng.uniform(0.3, 0.8) * (hi - lo).sum(), 1))
            H.append(np.ones((1, n_xi)))
            h.append(np.array([beta]))
            F.append(-(g_lo.sum(axis=0) + np.round(rng.uniform(0.0, 1.0, n_x), 1) * (g_hi.sum(axis=0) > 0)).reshape(1, -1))
        H = np.vstack(H)
        h = np.concatenate(h)
        F = np.vstack(F)

        d_main = np.round(rng.uniform(-1.0, 4.0, n_main), 2)
        d = np.concatenate([d_main, np.full(m_d, SLACK_PENALTY)])
        f_dem = np.round(rng.uniform(0.0, 3.0, m_d), 1)
        u_cap = np.round(rng.uniform(0.5, 4.0, n_main), 1)
        f = np.concatenate([f_dem, -u_cap])
        G = np.zeros((m_y, n_x))
        G[m_d:] = G_cap * rng.uniform(0.8, 1.2, G_cap.shape).round(2)
        E = np.zeros((m_y, n_xi))
        E[:m_d] = -E_dem
        scen.append(ScenarioBlock.from_arrays(probs[s], d, f, h, H, F, B, G, E))

    inst = CompactInstance(c, sp.csr_matrix(A), b, nb, ni, scen, name=f"golden-{seed}")
    x_bounds = [(0, 1)] * nb + [(0, int_ub)] * ni
    return GoldenInstance(inst, x_bounds, seed)


def golden_suite(random_count: int = 40, capacity_count: int = 20) -> list[GoldenInstance]:
    """The fixed cross-check suite: mixed random instances plus capacity-expansion ones."""
    return [random_instance(k) for k in range(random_count)] + [
        capacity_expansion_instance(k) for k in range(capacity_count)
    ]


def micro_instance(seed: int) -> GoldenInstance:
    """Instances small enough for the iteration-count bound to be checked."""
    return random_instance(seed, n_xi=1, num_scenarios=int(np.random.default_rng(seed).integers(1, 3)), n_binary=2, n_integer=0, budget=False)


def capacity_expansion_instance(
    seed: int, n_integer: int = 2, unit_cap: int = 9, n_suppliers: int = 8, num_scenarios: int = 2
) -> GoldenInstance:
    """Integer capacity purchases feeding a merit order of suppliers.

    Demand is served by suppliers sorted by cost; every purchased unit adds
    capacity to the suppliers it owns. The marginal supplier, and with it
    the dual price of demand, changes with almost every investment level,
    so a single dual hyperplane per visited x is a weak approximation while
    the recourse replica stays exact.
    """
    rng = np.random.default_rng(seed)
    ni, n_main, m_d, n_xi = n_integer, n_suppliers, 2, 2
    cost = np.sort(np.round(rng.uniform(1.0, 9.0, n_main), 2))
    c = np.round(rng.uniform(2.0, 8.0, ni), 2)
    owner = rng.integers(0, ni, n_main)
    G_cap = np.zeros((n_main, ni))
    G_cap[np.arange(n_main), owner] = np.round(rng.uniform(0.5, 1.5, n_main), 1)
    Bd = (rng.random((m_d, n_main)) < 0.5).astype(float)
    Bd[rng.integers(m_d, size=n_main), np.arange(n_main)] = 1.0
    n_y, m_y = n_main + m_d, m_d + n_main
    B = np.zeros((m_y, n_y))
    B[:m_d, :n_main] = Bd
    B[:m_d, n_main:] = np.eye(m_d)
    B[m_d:, :n_main] = -np.eye(n_main)
    probs = rng.dirichlet(np.ones(num_scenarios))
    scen = []
    for s in range(num_scenarios):
        lo = np.round(rng.uniform(1.0, 3.0, n_xi), 1)
        hi = lo + np.round(rng.uniform(2.0, 5.0, n_xi), 1)
        g_hi = np.round(rng.uniform(0.0, 0.6, (n_xi, ni)) * (rng.random((n_xi, ni)) < 0.5), 1)
        g_lo = np.round(0.5 * g_hi, 1)
        H = np.vstack([np.eye(n_xi), -np.eye(n_xi)])
        h = np.concatenate([hi, -lo])
        F = np.vstack([-g_hi, g_lo])
        d = np.concatenate([cost * rng.uniform(0.9, 1.1, n_main).round(2), np.full(m_d, SLACK_PENALTY)])
        f = np.concatenate([np.round(rng.uniform(1.0, 3.0, m_d), 1), -np.round(rng.uniform(0.0, 0.5, n_main), 1)])
        G = np.zeros((m_y, ni))
        G[m_d:] = G_cap
        E = np.zeros((m_y, n_xi))
        E[:m_d] = -np.round(rng.uniform(0.3, 1.2, (m_d, n_xi)), 1)
        scen.append(ScenarioBlock.from_arrays(probs[s], d, f, h, H, F, B, G, E))
    A = sp.identity(ni, format="csr")
    b = np.full(ni, float(unit_cap))
    inst = CompactInstance(c, A, b, 0, ni, scen, name=f"capacity-{seed}")
    return GoldenInstance(inst, [(0, unit_cap)] * ni, seed)
