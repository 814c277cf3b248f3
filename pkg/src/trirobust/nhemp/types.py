"""Input data for hydrogen-electrical microgrid planning.

Units are fixed throughout: kW, kWh, kVA, kV, Ohm, kg, kg/h, h and $.
Angles are in radians. Per-scenario series carry the scenario as their
leading axis.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np

RES_KINDS = ("pv", "wt")
SIZED_KINDS = ("pv", "wt", "bb", "elz", "ht", "hd")


class CaseError(ValueError):
    """Invalid or inconsistent planning data."""


class NestingWarning(UserWarning):
    pass


def _arr(v, dtype=float) -> np.ndarray:
    return np.asarray(v, dtype=dtype)


@dataclass
class DistributionNetwork:
    """Radial feeder rooted at node 0; ``lines`` are (parent, child) pairs."""

    n_nodes: int
    lines: list
    r: np.ndarray
    x: np.ndarray
    s_line: np.ndarray
    candidates: list
    s_lv: np.ndarray
    s_mv: float
    U0: float = 10.0
    U_min: np.ndarray | float = 9.3
    U_max: np.ndarray | float = 10.7

    def __post_init__(self):
        self.lines = [(int(i), int(j)) for i, j in self.lines]
        self.candidates = [int(i) for i in self.candidates]
        self.r = _arr(self.r).ravel()
        self.x = _arr(self.x).ravel()
        self.s_line = _arr(self.s_line).ravel()
        self.s_lv = np.broadcast_to(_arr(self.s_lv), (len(self.candidates),)).copy()
        self.U_min = np.broadcast_to(_arr(self.U_min), (self.n_nodes,)).copy()
        self.U_max = np.broadcast_to(_arr(self.U_max), (self.n_nodes,)).copy()

    @property
    def parent(self) -> np.ndarray:
        par = np.full(self.n_nodes, -1)
        for i, j in self.lines:
            par[j] = i
        return par

    def children(self, i: int) -> list[int]:
        """Indices of lines leaving node ``i``."""
        return [k for k, (a, _) in enumerate(self.lines) if a == i]

    def incoming(self) -> np.ndarray:
        """Line index feeding each node (-1 for the root)."""
        inc = np.full(self.n_nodes, -1)
        for k, (_, j) in enumerate(self.lines):
            inc[j] = k
        return inc

    def validate(self) -> None:
        n, L = self.n_nodes, len(self.lines)
        if n < 2:
            raise CaseError("network needs at least two nodes")
        if L != n - 1:
            raise CaseError(f"network is not radial: {L} lines for {n} nodes")
        for name in ("r", "x", "s_line"):
            if getattr(self, name).shape != (L,):
                raise CaseError(f"network.{name} needs one entry per line")
        seen = np.zeros(n, dtype=int)
        for i, j in self.lines:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise CaseError(f"line ({i}, {j}) references an unknown node")
            seen[j] += 1
        if seen[0] or np.any(seen[1:] != 1):
            raise CaseError("network is not radial: every non-root node needs exactly one feeding line")
        reach, stack = {0}, [0]
        while stack:
            i = stack.pop()
            for k in self.children(i):
                j = self.lines[k][1]
                if j not in reach:
                    reach.add(j)
                    stack.append(j)
        if len(reach) != n:
            raise CaseError("network is not radial: some nodes are unreachable from the root")
        if len(set(self.candidates)) != len(self.candidates):
            raise CaseError("duplicate candidate node")
        for i in self.candidates:
            if not 1 <= i < n:
                raise CaseError(f"candidate node {i} is not a non-root node")
        if np.any(self.s_line <= 0) or np.any(self.s_lv <= 0) or self.s_mv <= 0:
            raise CaseError("apparent-power caps must be positive")
        if np.any(self.U_min >= self.U0) or np.any(self.U_max <= self.U0):
            raise CaseError("voltage bounds must bracket U0")


@dataclass
class ZonePartition:
    zones: list
    names: list = None

    def __post_init__(self):
        self.zones = [[int(i) for i in z] for z in self.zones]
        if self.names is None:
            self.names = [chr(ord("A") + k) if k < 26 else f"Z{k}" for k in range(len(self.zones))]

    def validate(self, net: DistributionNetwork) -> None:
        if not self.zones:
            raise CaseError("at least one refueling zone is required")
        if len(self.names) != len(self.zones):
            raise CaseError("one name per zone is required")
        flat = [i for z in self.zones for i in z]
        for k, z in enumerate(self.zones):
            if not z:
                raise CaseError(f"zone {self.names[k]} has no candidate node")
        unknown = set(flat) - set(net.candidates)
        if unknown:
            raise CaseError(f"zones reference nodes outside the candidate set: {sorted(unknown)}")
        if len(flat) != len(set(flat)):
            raise CaseError("zones overlap")
        if set(flat) != set(net.candidates):
            raise CaseError("zones do not cover the candidate set")


@dataclass
class ComponentCatalog:
    """Candidate components; ``bounds[k] = (min, max)`` units per microgrid."""

    c_hem: float
    c_pv: float
    p_pv: float
    c_wt: float
    p_wt: float
    c_bb: float
    p_bb: float
    e_bb: float
    eta_ch: float
    eta_dis: float
    dod: float
    kappa: float
    c_elz: float
    p_elz: float
    eta_elz: float
    lhv: float
    c_ht: float
    p_ht: float
    phi_ht: float
    c_hd: float
    sr: float
    bounds: dict = field(default_factory=dict)
    res_angle_min: float = 0.0
    res_angle_max: float = 0.0

    def __post_init__(self):
        b = {k: (0, 0) for k in SIZED_KINDS}
        b.update({k: tuple(int(v) for v in val) for k, val in dict(self.bounds).items()})
        self.bounds = b

    def unit_cost(self, kind: str) -> float:
        """Annualized cost of one unit of ``kind`` ($/yr)."""
        if kind == "hd":
            return self.c_hd
        return getattr(self, f"c_{kind}") * getattr(self, f"p_{kind}")

    def validate(self) -> None:
        for name in ("eta_ch", "eta_dis", "eta_elz", "dod"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise CaseError(f"catalog.{name} must lie in (0, 1], got {v}")
        if self.sr <= 0:
            raise CaseError("catalog.sr must be positive")
        if not 0 <= self.phi_ht < 1:
            raise CaseError("catalog.phi_ht must lie in [0, 1)")
        if self.res_angle_min > self.res_angle_max:
            raise CaseError("RES power-factor angle bounds are reversed")
        unknown = set(self.bounds) - set(SIZED_KINDS)
        if unknown:
            raise CaseError(f"unknown component kinds in bounds: {sorted(unknown)}")
        for k, (lo, hi) in self.bounds.items():
            if lo < 0 or lo > hi:
                raise CaseError(f"bounds for {k} must satisfy 0 <= min <= max")


@dataclass
class ScenarioSet:
    """Operating scenarios of one typical day.

    Shapes: ``res_factor`` (S, 2, |candidates|, T), ``load`` (S, nodes, T),
    ``price_import``/``price_retail`` (S, T), ``g_pur_cap`` (S, Z, T);
    ``price_h2_buy``, ``price_h2_sell``, ``penalty_ls`` are (S,).
    ``load_angle`` is per node.
    """

    pi: np.ndarray
    res_factor: np.ndarray
    load: np.ndarray
    load_angle: np.ndarray
    price_import: np.ndarray
    price_retail: np.ndarray
    price_h2_buy: np.ndarray
    price_h2_sell: np.ndarray
    penalty_ls: np.ndarray
    g_pur_cap: np.ndarray
    dt: float = 1.0
    sigma: float = 365.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                raise CaseError(f"missing scenario series {f.name!r}")
            if f.name not in ("dt", "sigma"):
                setattr(self, f.name, _arr(v))
        S = self.pi.shape[0]
        for name in ("price_h2_buy", "price_h2_sell", "penalty_ls"):
            setattr(self, name, np.broadcast_to(getattr(self, name), (S,)).copy())

    @property
    def num_scenarios(self) -> int:
        return self.pi.shape[0]

    @property
    def periods(self) -> int:
        return self.load.shape[-1]

    def validate(self, net: DistributionNetwork, zones: ZonePartition) -> None:
        S, T, nc, Z = self.num_scenarios, self.periods, len(net.candidates), len(zones.zones)
        want = {
            "res_factor": (S, 2, nc, T),
            "load": (S, net.n_nodes, T),
            "load_angle": (net.n_nodes,),
            "price_import": (S, T),
            "price_retail": (S, T),
            "g_pur_cap": (S, Z, T),
        }
        for name, shape in want.items():
            if getattr(self, name).shape != shape:
                raise CaseError(f"scenarios.{name} has shape {getattr(self, name).shape}, expected {shape}")
        if np.any(self.pi < 0) or abs(self.pi.sum() - 1.0) > 1e-9:
            raise CaseError("scenario probabilities must be nonnegative and sum to 1")
        if np.any(self.res_factor < 0) or np.any(self.res_factor > 1):
            raise CaseError("RES capacity factors must lie in [0, 1]")
        for name in ("price_import", "price_retail", "price_h2_buy", "price_h2_sell", "penalty_ls", "g_pur_cap", "load"):
            if np.any(getattr(self, name) < 0):
                raise CaseError(f"scenarios.{name} must be nonnegative")
        if self.dt <= 0 or self.sigma <= 0:
            raise CaseError("dt and sigma must be positive")


@dataclass
class DduCoefficients:
    """Refueling-demand band per zone and period, widened by installed HDs.

    ``xi_hi``/``xi_lo`` (S, Z, T); ``gamma_hi``/``gamma_lo`` (Z, T);
    ``zeta_hi``/``zeta_lo`` (S, T); ``alpha_hi``/``alpha_lo`` (T,) default
    to the zonal means of the gammas. ``town_band=False`` drops the rows
    on total demand.
    """

    xi_hi: np.ndarray
    xi_lo: np.ndarray
    gamma_hi: np.ndarray
    gamma_lo: np.ndarray
    zeta_hi: np.ndarray | None = None
    zeta_lo: np.ndarray | None = None
    alpha_hi: np.ndarray | None = None
    alpha_lo: np.ndarray | None = None
    town_band: bool = True

    def __post_init__(self):
        for name in ("xi_hi", "xi_lo", "gamma_hi", "gamma_lo"):
            setattr(self, name, _arr(getattr(self, name)))
        if self.alpha_hi is None:
            self.alpha_hi = self.gamma_hi.mean(axis=0)
        if self.alpha_lo is None:
            self.alpha_lo = self.gamma_lo.mean(axis=0)
        self.alpha_hi, self.alpha_lo = _arr(self.alpha_hi), _arr(self.alpha_lo)
        if self.zeta_hi is None:
            self.zeta_hi = self.xi_hi.sum(axis=1)
        if self.zeta_lo is None:
            self.zeta_lo = self.xi_lo.sum(axis=1)
        self.zeta_hi, self.zeta_lo = _arr(self.zeta_hi), _arr(self.zeta_lo)

    def scaled(self, chi: float) -> "DduCoefficients":
        """Copy with every induced slope multiplied by ``chi``."""
        return dataclasses.replace(
            self,
            gamma_hi=chi * self.gamma_hi,
            gamma_lo=chi * self.gamma_lo,
            alpha_hi=chi * self.alpha_hi,
            alpha_lo=chi * self.alpha_lo,
        )

    def static(self) -> "DduCoefficients":
        return self.scaled(0.0)

    def validate(self, scen: ScenarioSet, zones: ZonePartition) -> None:
        S, Z, T = scen.num_scenarios, len(zones.zones), scen.periods
        want = {
            "xi_hi": (S, Z, T), "xi_lo": (S, Z, T), "gamma_hi": (Z, T), "gamma_lo": (Z, T),
            "zeta_hi": (S, T), "zeta_lo": (S, T), "alpha_hi": (T,), "alpha_lo": (T,),
        }
        for name, shape in want.items():
            if getattr(self, name).shape != shape:
                raise CaseError(f"ddu.{name} has shape {getattr(self, name).shape}, expected {shape}")
        if np.any(self.xi_lo < 0) or np.any(self.gamma_lo < 0) or np.any(self.alpha_lo < 0):
            raise CaseError("lower demand bounds and slopes must be nonnegative")
        if np.any(self.xi_lo > self.xi_hi) or np.any(self.gamma_lo > self.gamma_hi):
            raise CaseError("zonal demand band is reversed")
        if self.town_band and (np.any(self.alpha_lo > self.alpha_hi) or np.any(self.zeta_lo > self.zeta_hi)):
            raise CaseError("town demand band is reversed")
        if self.town_band and (
            np.any(self.zeta_lo < self.xi_lo.sum(axis=1) - 1e-9)
            or np.any(self.zeta_hi > self.xi_hi.sum(axis=1) + 1e-9)
        ):
            warnings.warn("town demand band is not nested inside the summed zonal bands", NestingWarning, stacklevel=2)


@dataclass
class NhempCase:
    name: str
    network: DistributionNetwork
    zones: ZonePartition
    catalog: ComponentCatalog
    scenarios: ScenarioSet
    ddu: DduCoefficients
    polygon_segments: int = 12
    config: dict = field(default_factory=lambda: {"engine": {"sp_form": "ou"}})

    def validate(self) -> None:
        self.network.validate()
        self.zones.validate(self.network)
        self.catalog.validate()
        self.scenarios.validate(self.network, self.zones)
        self.ddu.validate(self.scenarios, self.zones)

    def replace(self, **changes) -> "NhempCase":
        return dataclasses.replace(self, **changes)


@dataclass
class PlanningSolution:
    """Investment plus the worst-case operation of every scenario."""

    x: np.ndarray
    y: list
    xi: list
    objective: float | None = None


@dataclass
class PlanningMetrics:
    phi: float
    phi_capex: float
    phi_om: float
    gl_node: np.ndarray
    gl_total: float
    max_u: float
    min_u: float
    ave_u: float
    var_u: float
    v_die: float | None = None
    v_die_rel: float | None = None

    def as_row(self) -> dict:
        row = {k: v for k, v in dataclasses.asdict(self).items() if k != "gl_node"}
        for k, v in enumerate(self.gl_node):
            row[f"gl_node_{k}"] = float(v)
        return row
