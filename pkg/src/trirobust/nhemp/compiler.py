"""Compile a planning case into the compact trilevel form.

Upper level x = [u_i, x_pv,i, x_wt,i, x_bb,i, x_elz,i, x_ht,i, n_i] over
candidate nodes i. Recourse variables must be nonnegative, so signed
quantities are shifted by their caps (p_lv, q_lv, fp, fq) or by their
lower bounds (U, reactive RES output). Voltages are carried in volts
above U_min so that the voltage-drop rows have O(1) coefficients.
:class:`Layout` undoes the shifts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..instance import CompactInstance, ScenarioBlock
from .types import CaseError, NhempCase, SIZED_KINDS

VOLT = 1000.0

# one entry per candidate node unless noted
Y_FAMILIES = (
    ("p_mv", "one"), ("q_mv", "one"), ("g_pur", "cand"), ("p_res", "res"), ("q_res", "res"),
    ("pc", "cand"), ("pd", "cand"), ("soc", "cand"), ("p_lv", "cand"), ("q_lv", "cand"),
    ("p_elz", "cand"), ("g_elz", "cand"), ("loh", "cand"), ("gl", "cand"),
    ("pl", "node"), ("ls", "node"), ("U", "node"), ("ul", "zone"), ("fp", "line"), ("fq", "line"),
)


def polygonal_quadratic_cut_set(s_cap: float, k: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``a_m p + b_m q <= s_cap`` of the regular k-gon inscribed in the disk.

    Vertices sit at angles 2*pi*m/k, so (s_cap, 0) is always feasible and
    the largest radial shortfall is s_cap*(1 - cos(pi/k)).
    """
    if k < 4 or k % 2:
        raise ValueError(f"polygon needs an even number of segments >= 4, got {k}")
    if s_cap <= 0:
        raise ValueError("capacity must be positive")
    phi = (2 * np.arange(k) + 1) * math.pi / k
    scale = 1.0 / math.cos(math.pi / k)
    return np.column_stack([np.cos(phi), np.sin(phi)]) * scale, np.full(k, float(s_cap))


@dataclass
class Layout:
    """Index maps from model quantities to x, y and xi positions."""

    n_cand: int
    n_nodes: int
    n_lines: int
    n_zones: int
    periods: int
    x: dict
    y: dict
    n_y: int
    shift: dict
    res_tan_min: float

    def xi_index(self, z: int, t: int) -> int:
        return z * self.periods + t

    def investment(self, x) -> dict:
        x = np.asarray(x, dtype=float)
        return {k: x[idx] for k, idx in self.x.items()}

    def decode(self, y) -> dict:
        """Physical (T, size) arrays for every operational family."""
        y = np.asarray(y, dtype=float)
        out = {name: y[idx] - self.shift.get(name, 0.0) for name, idx in self.y.items()}
        out["U"] = y[self.y["U"]] / VOLT - self.shift["U"]
        out["q_res"] = out["q_res"] + self.res_tan_min * out["p_res"]
        return out


def build_layout(case: NhempCase) -> Layout:
    net, T = case.network, case.scenarios.periods
    nc = len(net.candidates)
    x, pos = {}, 0
    for name in ("u",) + SIZED_KINDS:
        key = "n" if name == "hd" else name
        x[key] = np.arange(pos, pos + nc)
        pos += nc
    sizes = {"one": 1, "cand": nc, "res": 2 * nc, "node": net.n_nodes, "zone": len(case.zones.zones), "line": len(net.lines)}
    y, pos = {}, 0
    for name, kind in Y_FAMILIES:
        n = sizes[kind]
        y[name] = np.arange(pos, pos + T * n).reshape(T, n)
        pos += T * n
    shift = {
        "p_lv": net.s_lv.copy(), "q_lv": net.s_lv.copy(),
        "fp": net.s_line.copy(), "fq": net.s_line.copy(),
        "U": -net.U_min,
    }
    return Layout(nc, net.n_nodes, len(net.lines), len(case.zones.zones), T, x, y, pos, shift,
                  math.tan(case.catalog.res_angle_min))


class _Rows:
    """Accumulates rows of B y >= f - G x - E xi.

    ``x_rhs`` and ``xi_rhs`` are the coefficients of x and xi on the
    right-hand side, so G = -x_rhs and E = -xi_rhs.
    """

    def __init__(self):
        self.B, self.G, self.E, self.f = [], [], [], []
        self.m = 0

    def ge(self, y_terms, const=0.0, x_terms=(), xi_terms=()):
        r = self.m
        for j, a in y_terms:
            if a:
                self.B.append((r, int(j), float(a)))
        for j, a in x_terms:
            if a:
                self.G.append((r, int(j), -float(a)))
        for j, a in xi_terms:
            if a:
                self.E.append((r, int(j), -float(a)))
        self.f.append(float(const))
        self.m += 1

    def eq(self, y_terms, const=0.0, x_terms=(), xi_terms=()):
        y_terms, x_terms, xi_terms = list(y_terms), list(x_terms), list(xi_terms)
        self.ge(y_terms, const, x_terms, xi_terms)
        self.ge([(j, -a) for j, a in y_terms], -const, [(j, -a) for j, a in x_terms], [(j, -a) for j, a in xi_terms])

    def polygon(self, p, q, s_cap, k, p_shift=0.0, q_shift=0.0):
        # a (p' - ps) + b (q' - qs) <= S
        A, rhs = polygonal_quadratic_cut_set(s_cap, k)
        for (a, b), s in zip(A, rhs):
            self.ge([(p, -a), (q, -b)], -(s + a * p_shift + b * q_shift))

    def matrices(self, n_y, n_x, n_xi):
        def mat(trip, n):
            if not trip:
                return sp.csr_matrix((self.m, n))
            r, c, v = zip(*trip)
            return sp.csr_matrix((v, (r, c)), shape=(self.m, n))

        return mat(self.B, n_y), np.array(self.f), mat(self.G, n_x), mat(self.E, n_xi)


def _upper_level(case: NhempCase, lay: Layout):
    cat, nc = case.catalog, lay.n_cand
    n_x = 7 * nc
    c = np.zeros(n_x)
    c[lay.x["u"]] = cat.c_hem
    for kind in SIZED_KINDS:
        c[lay.x["n" if kind == "hd" else kind]] = cat.unit_cost(kind)
    rows, rhs, eq = [], [], []
    for z in case.zones.zones:
        r = np.zeros(n_x)
        for i in z:
            r[lay.x["u"][case.network.candidates.index(i)]] = 1.0
        rows.append(r)
        rhs.append(1.0)
        eq.append(True)
    for kind in SIZED_KINDS:
        lo, hi = cat.bounds[kind]
        idx = lay.x["n" if kind == "hd" else kind]
        for ci in range(nc):
            r = np.zeros(n_x)
            r[idx[ci]], r[lay.x["u"][ci]] = 1.0, -hi
            rows.append(r)
            rhs.append(0.0)
            eq.append(False)
            if lo:
                r = np.zeros(n_x)
                r[idx[ci]], r[lay.x["u"][ci]] = -1.0, lo
                rows.append(r)
                rhs.append(0.0)
                eq.append(False)
    return c, sp.csr_matrix(np.array(rows)), np.array(rhs), np.array(eq)


def _uncertainty(case: NhempCase, lay: Layout, s: int):
    ddu, T, Z = case.ddu, lay.periods, lay.n_zones
    n_x, n_xi = 7 * lay.n_cand, Z * T
    cand = case.network.candidates
    H, h, F = [], [], []

    def row(xi_coef, const, n_coef):
        hr = np.zeros(n_xi)
        for j, a in xi_coef:
            hr[j] = a
        fr = np.zeros(n_x)
        for ci, a in n_coef:
            fr[lay.x["n"][ci]] += a
        H.append(hr)
        h.append(const)
        F.append(fr)

    # H xi <= h - F x
    for z, members in enumerate(case.zones.zones):
        cis = [cand.index(i) for i in members]
        for t in range(T):
            k = lay.xi_index(z, t)
            row([(k, 1.0)], ddu.xi_hi[s, z, t], [(ci, -ddu.gamma_hi[z, t]) for ci in cis])
            row([(k, -1.0)], -ddu.xi_lo[s, z, t], [(ci, ddu.gamma_lo[z, t]) for ci in cis])
    if ddu.town_band:
        for t in range(T):
            ks = [lay.xi_index(z, t) for z in range(Z)]
            row([(k, 1.0) for k in ks], ddu.zeta_hi[s, t], [(ci, -ddu.alpha_hi[t]) for ci in range(lay.n_cand)])
            row([(k, -1.0) for k in ks], -ddu.zeta_lo[s, t], [(ci, ddu.alpha_lo[t]) for ci in range(lay.n_cand)])
    return np.array(H), np.array(h), np.array(F)


def _recourse(case: NhempCase, lay: Layout, s: int):
    net, cat, sc = case.network, case.catalog, case.scenarios
    T, dt, k = lay.periods, sc.dt, case.polygon_segments
    X, Y = lay.x, lay.y
    tan_lo, tan_hi = math.tan(cat.res_angle_min), math.tan(cat.res_angle_max)
    tan_pl = np.tan(sc.load_angle)
    cand = net.candidates
    is_cand = {i: ci for ci, i in enumerate(cand)}
    incoming = net.incoming()
    kU = 1.0 / net.U0  # volts per (ohm * kW / kV)
    tank_keep = (1.0 - cat.phi_ht) ** dt
    R = _Rows()

    d = np.zeros(lay.n_y)
    w = sc.sigma * dt
    for t in range(T):
        d[Y["p_mv"][t]] = w * sc.price_import[s, t]
        d[Y["g_pur"][t]] = w * sc.price_h2_buy[s]
        d[Y["ls"][t, 1:]] = w * sc.penalty_ls[s]
        d[Y["pc"][t]] = d[Y["pd"][t]] = 0.5 * w * cat.kappa
        d[Y["pl"][t, 1:]] = -w * sc.price_retail[s, t]
        d[Y["gl"][t]] = -w * sc.price_h2_sell[s]

    for ci, node in enumerate(cand):
        s_lv = net.s_lv[ci]
        for t in range(T):
            y = {name: Y[name][t] for name in Y}
            p_res = [y["p_res"][2 * ci + kk] for kk in range(2)]
            q_res = [y["q_res"][2 * ci + kk] for kk in range(2)]
            for kk, kind in enumerate(("pv", "wt")):
                cap = sc.res_factor[s, kk, ci, t] * getattr(cat, f"p_{kind}")
                R.ge([(p_res[kk], -1.0)], 0.0, [(X[kind][ci], -cap)])
                R.ge([(p_res[kk], tan_hi - tan_lo), (q_res[kk], -1.0)])
            pc, pd, soc = y["pc"][ci], y["pd"][ci], y["soc"][ci]
            R.ge([(pc, -1.0)], 0.0, [(X["bb"][ci], -cat.p_bb)])
            R.ge([(pd, -1.0)], 0.0, [(X["bb"][ci], -cat.p_bb)])
            R.ge([(soc, 1.0)], 0.0, [(X["bb"][ci], (1.0 - cat.dod) * cat.e_bb)])
            R.ge([(soc, -1.0)], 0.0, [(X["bb"][ci], -cat.e_bb)])
            if t + 1 < T:
                R.eq([(Y["soc"][t + 1, ci], 1.0), (soc, -1.0), (pc, -cat.eta_ch * dt), (pd, dt / cat.eta_dis)])
            p_lv, q_lv = y["p_lv"][ci], y["q_lv"][ci]
            pl = y["pl"][node]
            R.eq([(p_res[0], 1.0), (p_res[1], 1.0), (pd, 1.0), (pc, -1.0), (p_lv, 1.0), (pl, -1.0), (y["p_elz"][ci], -1.0)], s_lv)
            R.eq([(q_res[0], 1.0), (q_res[1], 1.0), (p_res[0], tan_lo), (p_res[1], tan_lo), (q_lv, 1.0), (pl, -tan_pl[node])], s_lv)
            R.polygon(p_lv, q_lv, s_lv, k, s_lv, s_lv)
            R.eq([(y["g_elz"][ci], 1.0), (y["p_elz"][ci], -cat.eta_elz / cat.lhv)])
            R.ge([(y["p_elz"][ci], -1.0)], 0.0, [(X["elz"][ci], -cat.p_elz)])
            nxt = Y["loh"][(t + 1) % T, ci]
            R.eq([(nxt, 1.0), (y["loh"][ci], -tank_keep), (y["g_elz"][ci], -dt), (y["g_pur"][ci], -dt), (y["gl"][ci], dt)])
            zone = next(z for z, m in enumerate(case.zones.zones) if node in m)
            R.ge([(y["g_pur"][ci], -1.0)], 0.0, [(X["u"][ci], -sc.g_pur_cap[s, zone, t])])
            R.ge([(y["loh"][ci], -1.0)], 0.0, [(X["ht"][ci], -cat.p_ht)])
            R.ge([(y["gl"][ci], -1.0)], 0.0, [(X["n"][ci], -cat.sr)])
        R.eq([(Y["pc"][t, ci], cat.eta_ch) for t in range(T)] + [(Y["pd"][t, ci], -1.0 / cat.eta_dis) for t in range(T)])

    for t in range(T):
        y = {name: Y[name][t] for name in Y}
        for z, members in enumerate(case.zones.zones):
            R.eq([(y["gl"][is_cand[i]], 1.0) for i in members] + [(y["ul"][z], 1.0)], 0.0,
                 xi_terms=[(lay.xi_index(z, t), 1.0)])
        for i in range(net.n_nodes):
            R.eq([(y["pl"][i], 1.0), (y["ls"][i], 1.0)], sc.load[s, i, t])
            R.ge([(y["U"][i], -1.0)], -VOLT * (net.U_max[i] - net.U_min[i]))
        out0 = net.children(0)
        R.eq([(y["fp"][l], 1.0) for l in out0] + [(y["p_mv"][0], -1.0)], float(net.s_line[out0].sum()))
        R.eq([(y["fq"][l], 1.0) for l in out0] + [(y["q_mv"][0], -1.0)], float(net.s_line[out0].sum()))
        R.polygon(y["p_mv"][0], y["q_mv"][0], net.s_mv, k)
        for j in range(1, net.n_nodes):
            l_in, outs = incoming[j], net.children(j)
            const = net.s_line[l_in] - net.s_line[outs].sum()
            if j in is_cand:
                ci = is_cand[j]
                p_inj, q_inj = [(y["p_lv"][ci], -1.0)], [(y["q_lv"][ci], -1.0)]
                const -= net.s_lv[ci]
            else:
                p_inj, q_inj = [(y["pl"][j], -1.0)], [(y["pl"][j], -tan_pl[j])]
            R.eq([(y["fp"][l_in], 1.0)] + [(y["fp"][l], -1.0) for l in outs] + p_inj, const)
            R.eq([(y["fq"][l_in], 1.0)] + [(y["fq"][l], -1.0) for l in outs] + q_inj, const)
        for l, (i, j) in enumerate(net.lines):
            r, xl, S = net.r[l], net.x[l], net.s_line[l]
            R.eq(
                [(y["U"][i], 1.0), (y["U"][j], -1.0), (y["fp"][l], -r * kU), (y["fq"][l], -xl * kU)],
                -VOLT * (net.U_min[i] - net.U_min[j]) - (r + xl) * S * kU,
            )
            R.polygon(y["fp"][l], y["fq"][l], S, k, S, S)
    return d, R


def compile_case(case: NhempCase) -> tuple[CompactInstance, Layout]:
    case.validate()
    lay = build_layout(case)
    c, A, b, eq = _upper_level(case, lay)
    n_x = c.shape[0]
    scen = []
    for s in range(case.scenarios.num_scenarios):
        H, h, F = _uncertainty(case, lay, s)
        d, rows = _recourse(case, lay, s)
        B, f, G, E = rows.matrices(lay.n_y, n_x, H.shape[1])
        scen.append(ScenarioBlock.from_arrays(case.scenarios.pi[s], d, f, h, H, F, B, G, E))
    inst = CompactInstance(c, A, b, lay.n_cand, 6 * lay.n_cand, scen, upper_eq=eq, name=case.name)
    return inst, lay


def build_compact_instance(net, zones, catalog, scen, ddu, polygon_segments: int = 12, name: str = "nhemp") -> CompactInstance:
    if net is None or zones is None or catalog is None or scen is None or ddu is None:
        raise CaseError("all of network, zones, catalog, scenarios and ddu are required")
    case = NhempCase(name, net, zones, catalog, scen, ddu, polygon_segments)
    return compile_case(case)[0]


def plan_bounds(case: NhempCase, layout: Layout) -> list[tuple[int, int]]:
    """Per-variable (lo, hi) box of the investment vector, for enumeration."""
    out = [(0, 0)] * (layout.n_cand * (1 + len(SIZED_KINDS)))
    for key, idx in layout.x.items():
        hi = 1 if key == "u" else int(case.catalog.bounds.get("hd" if key == "n" else key, (0, 0))[1])
        for j in idx:
            out[j] = (0, hi)
    return out
