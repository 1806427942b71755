"""Single-level reformulation of the bilevel price-setting game.

The operator (leader) chooses hourly electricity and heat prices plus its
own dispatch; customers (followers) respond by shifting electric load and
curtailing heat within comfort limits, minimizing their bill plus a
quadratic discomfort penalty.  The follower problem is convex, so it is
replaced by its KKT conditions; the complementarity conditions are
linearized with big-M switch binaries; and the bilinear price*response
revenue terms are eliminated exactly via the stationarity and
complementarity identities.  The result is a convex mixed-integer QP in
which the continuous relaxation of every node is a well-posed convex QP.

Variable blocks, in order: prices, unit dispatch, renewable dispatch,
storage (charge/discharge/state), boiler, reserve, zone heat injections,
follower primal (shift, two cut vectors), follower duals (budget
multiplier and six bound multiplier families), switch binaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .comfort import CutBounds, cuttable_bounds
from .datamodel import ScenarioConfig, pv_power, validate_config, wind_power
from .network import TransportModel, zone_transport
from .qp import QuadraticProgram

__all__ = [
    "AssemblyError",
    "VarIndex",
    "ComplementarityPair",
    "KKTSystem",
    "MIQPProblem",
    "PAIR_FAMILIES",
    "build_lower_qp",
    "build_kkt",
    "big_m_linearize",
    "eliminate_bilinear_revenue",
    "assemble_single_level",
    "build_single_layer_model",
    "build_dispatch_qp",
    "tou_prices",
    "objective_value_direct",
    "dump_model",
]

PAIR_FAMILIES = ("shift_lo", "shift_hi", "cut_res_lo", "cut_res_hi", "cut_pub_lo", "cut_pub_hi")


class AssemblyError(ValueError):
    """Model cannot be assembled: contradictory data found pre-solve."""


@dataclass(frozen=True)
class VarIndex:
    """Immutable name -> column-slice registry for one assembled model."""

    slices: dict[str, slice]
    names: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.names)

    def sl(self, key: str) -> slice:
        if key not in self.slices:
            raise KeyError(f"unknown variable block {key!r}")
        return self.slices[key]

    def col(self, key: str, t: int = 0) -> int:
        s = self.sl(key)
        if t < 0 or s.start + t >= s.stop:
            raise IndexError(f"{key}[{t}] outside block of size {s.stop - s.start}")
        return s.start + t

    def get(self, key: str, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.sl(key)]

    def has(self, key: str) -> bool:
        return key in self.slices


class _Layout:
    def __init__(self):
        self._slices: dict[str, slice] = {}
        self._names: list[str] = []

    def add(self, key: str, count: int) -> slice:
        if key in self._slices:
            raise AssemblyError(f"duplicate variable block {key!r}")
        s = slice(len(self._names), len(self._names) + count)
        self._slices[key] = s
        if count == 1:
            self._names.append(key)
        else:
            self._names.extend(f"{key}[{t}]" for t in range(count))
        return s

    def freeze(self) -> VarIndex:
        return VarIndex(slices=dict(self._slices), names=tuple(self._names))


@dataclass(frozen=True)
class ComplementarityPair:
    """One (slack expression, multiplier) pair with its big-M switch.

    slack = rhs - sum(coef * x[col]) >= 0, complementary to x[lam_col].
    ``slack_row``/``mult_row`` index the two big-M rows inside G once
    linearized (-1 before).  ``width`` is an a-priori upper bound on the
    slack, used for zero-width presolve fixing.
    """

    label: str
    t: int
    nu_col: int
    lam_col: int
    slack_cols: tuple[int, ...]
    slack_coefs: tuple[float, ...]
    slack_rhs: float
    width: float
    slack_row: int = -1
    mult_row: int = -1


@dataclass(frozen=True)
class KKTSystem:
    """First-order conditions of the customer response problem.

    ``stat_rows``/``stat_rhs`` are equality rows over the full variable
    vector (price columns enter linearly); ``pairs`` carry the
    complementarity structure prior to big-M linearization.
    """

    stat_rows: sp.csr_matrix
    stat_rhs: np.ndarray
    pairs: tuple[ComplementarityPair, ...]


@dataclass(frozen=True)
class MIQPProblem:
    """Convex MIQP: relaxed QP plus binary columns and switch metadata."""

    qp: QuadraticProgram
    binaries: tuple[int, ...]
    big_m: float
    pairs: tuple[ComplementarityPair, ...]
    index: VarIndex
    constant: float
    sense: str = "min"
    meta: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Shared model data


@dataclass(frozen=True)
class _ModelData:
    """Per-scenario constants every builder needs."""

    T: int
    dt: float
    s_max: np.ndarray
    x_max: np.ndarray
    y_max: np.ndarray
    cut_res: CutBounds
    cut_pub: CutBounds
    avail_w: np.ndarray  # summed wind availability, MW
    avail_pv: np.ndarray
    avail_by_plant: dict[str, np.ndarray]
    sigma: np.ndarray  # renewable forecast sigma, MW
    transport: TransportModel
    budget: float


def _model_data(cfg: ScenarioConfig, mode: int) -> _ModelData:
    validate_config(cfg)
    T, dt = cfg.horizon, cfg.delta_t
    prof = cfg.profile
    s_max = cfg.shift_bounds_frac * prof.p_load
    cut_res = cuttable_bounds(cfg.zone_res, cfg.comfort, prof.h_load_res, prof.t_out, mode, dt)
    cut_pub = cuttable_bounds(cfg.zone_pub, cfg.comfort, prof.h_load_pub, prof.t_out, mode, dt)
    avail_by_plant = {}
    aw = np.zeros(T)
    apv = np.zeros(T)
    sig = np.zeros(T)
    for r in cfg.renewables:
        if r.kind == "wind":
            a = np.asarray(wind_power(prof.wind_speed, r))
            aw += a
        else:
            a = np.asarray(pv_power(prof.pv_avail, r))
            apv += a
        avail_by_plant[r.name] = a
        sig += r.forecast_sigma_frac * a
    transport = zone_transport(cfg.network, T, dt)
    return _ModelData(
        T=T,
        dt=dt,
        s_max=s_max,
        x_max=cut_res.h_cut_max.copy(),
        y_max=cut_pub.h_cut_max.copy(),
        cut_res=cut_res,
        cut_pub=cut_pub,
        avail_w=aw,
        avail_pv=apv,
        avail_by_plant=avail_by_plant,
        sigma=sig,
        transport=transport,
        budget=cfg.shift_fraction * float(np.sum(prof.p_load)),
    )


# ---------------------------------------------------------------------------
# Customer response problem (given prices)


def build_lower_qp(cfg: ScenarioConfig, kappa_e: np.ndarray, kappa_h: np.ndarray, mode: int = 5) -> QuadraticProgram:
    """Customer cost-minimization QP at fixed prices.

    Variables are the shift vector and the two cut vectors; the objective
    is the full energy bill plus the quadratic discomfort penalty, so its
    optimum value is directly comparable across price vectors.
    """
    md = _model_data(cfg, mode)
    T = md.T
    kappa_e = np.asarray(kappa_e, dtype=float)
    kappa_h = np.asarray(kappa_h, dtype=float)
    if len(kappa_e) != T or len(kappa_h) != T:
        raise AssemblyError("build_lower_qp: price vectors must match the horizon")
    n = 3 * T
    Q = sp.diags(np.r_[np.zeros(T), np.full(2 * T, 2.0 * cfg.psi)], format="csr")
    c = np.r_[kappa_e, -kappa_h, -kappa_h]
    A = sp.csr_matrix((np.ones(T), (np.zeros(T, dtype=int), np.arange(T))), shape=(1, n))
    b = np.array([md.budget])
    lb = np.r_[-md.s_max, np.zeros(2 * T)]
    ub = np.r_[md.s_max, md.x_max, md.y_max]
    names = tuple(
        [f"shift[{t}]" for t in range(T)]
        + [f"cut_res[{t}]" for t in range(T)]
        + [f"cut_pub[{t}]" for t in range(T)]
    )
    return QuadraticProgram.build(Q, c, A, b, None, None, lb, ub, names)


def lower_objective_constant(cfg: ScenarioConfig, kappa_e: np.ndarray, kappa_h: np.ndarray) -> float:
    """Bill paid at zero response; add to the lower QP optimum for the full bill."""
    prof = cfg.profile
    return float(kappa_e @ prof.p_load + kappa_h @ (prof.h_load_res + prof.h_load_pub))


# ---------------------------------------------------------------------------
# KKT + big-M


def _kkt_for_layout(cfg: ScenarioConfig, idx: VarIndex, md: _ModelData) -> KKTSystem:
    T = md.T
    rows, cols, vals, rhs = [], [], [], []

    def put(r, col, v):
        rows.append(r)
        cols.append(col)
        vals.append(v)

    r = 0
    # d/d shift: price_e + eps - mult_lo + mult_hi = 0
    for t in range(T):
        put(r, idx.col("price_e", t), 1.0)
        put(r, idx.col("shift_budget_mult"), 1.0)
        put(r, idx.col("mult_shift_lo", t), -1.0)
        put(r, idx.col("mult_shift_hi", t), 1.0)
        rhs.append(0.0)
        r += 1
    # d/d cut_res: -price_h + 2 psi cut - mult_lo + mult_hi = 0
    for zone, cut in (("res", "cut_res"), ("pub", "cut_pub")):
        for t in range(T):
            put(r, idx.col("price_h", t), -1.0)
            put(r, idx.col(cut, t), 2.0 * cfg.psi)
            put(r, idx.col(f"mult_cut_{zone}_lo", t), -1.0)
            put(r, idx.col(f"mult_cut_{zone}_hi", t), 1.0)
            rhs.append(0.0)
            r += 1

    stat = sp.csr_matrix((vals, (rows, cols)), shape=(r, idx.n))

    pairs = []
    spec = [
        ("shift_lo", "shift", -1.0, md.s_max, 2.0 * md.s_max),
        ("shift_hi", "shift", +1.0, md.s_max, 2.0 * md.s_max),
        ("cut_res_lo", "cut_res", -1.0, np.zeros(T), md.x_max),
        ("cut_res_hi", "cut_res", +1.0, md.x_max, md.x_max),
        ("cut_pub_lo", "cut_pub", -1.0, np.zeros(T), md.y_max),
        ("cut_pub_hi", "cut_pub", +1.0, md.y_max, md.y_max),
    ]
    for label, var, coef, rhs_arr, width_arr in spec:
        for t in range(T):
            pairs.append(
                ComplementarityPair(
                    label=label,
                    t=t,
                    nu_col=idx.col(f"switch_{label}", t),
                    lam_col=idx.col(f"mult_{label}", t),
                    slack_cols=(idx.col(var, t),),
                    slack_coefs=(coef,),
                    slack_rhs=float(rhs_arr[t]),
                    width=float(width_arr[t]),
                )
            )
    return KKTSystem(stat_rows=stat, stat_rhs=np.asarray(rhs), pairs=tuple(pairs))


def build_kkt(cfg: ScenarioConfig, mode: int = 5) -> tuple[KKTSystem, VarIndex]:
    """Stationarity rows and complementarity pairs over the full layout."""
    md = _model_data(cfg, mode)
    idx = _build_layout(cfg, md, kkt=True)
    return _kkt_for_layout(cfg, idx, md), idx


def big_m_linearize(
    pairs: tuple[ComplementarityPair, ...], n: int, big_m: float, row_offset: int,
    dual_caps: tuple[float, ...] | None = None,
) -> tuple[sp.csr_matrix, np.ndarray, tuple[ComplementarityPair, ...]]:
    """Big-M switch rows for every pair.

    Per pair: ``slack <= M_p nu`` (written -coef*x - M_p nu <= -rhs) and
    ``mult <= M_d (1 - nu)`` (written mult + M_d nu <= M_d).  The slack side
    uses the pair's own width as its constant — the slack lives in
    [0, width] by the variable bounds, so this is the tightest valid choice
    and it keeps the continuous relaxation honest (nu >= slack / width).
    The multiplier side takes ``dual_caps`` when provided (any valid
    per-pair multiplier ceiling, e.g. derived from stationarity), falling
    back to the configured constant.  Returns the rows, their rhs, and the
    pairs annotated with absolute row indices (``row_offset`` = number of
    G rows that precede these).
    """
    rows, cols, vals, h = [], [], [], []
    out = []
    r = 0
    for ip, p in enumerate(pairs):
        if big_m < p.width - 1e-9:
            raise AssemblyError(
                f"big_m {big_m} is below the slack range {p.width:.6g} of pair "
                f"{p.label!r} at hour {p.t}; the linearization would cut solutions off"
            )
        m_p = min(big_m, p.width) if p.width > 1e-12 else big_m
        m_d = big_m if dual_caps is None else dual_caps[ip]
        for c_, v in zip(p.slack_cols, p.slack_coefs):
            rows.append(r)
            cols.append(c_)
            vals.append(-v)
        rows.append(r)
        cols.append(p.nu_col)
        vals.append(-m_p)
        h.append(-p.slack_rhs)
        slack_row = row_offset + r
        r += 1
        rows.append(r)
        cols.append(p.lam_col)
        vals.append(1.0)
        rows.append(r)
        cols.append(p.nu_col)
        vals.append(m_d)
        h.append(m_d)
        out.append(
            ComplementarityPair(
                label=p.label, t=p.t, nu_col=p.nu_col, lam_col=p.lam_col,
                slack_cols=p.slack_cols, slack_coefs=p.slack_coefs,
                slack_rhs=p.slack_rhs, width=p.width,
                slack_row=slack_row, mult_row=row_offset + r,
            )
        )
        r += 1
    G = sp.csr_matrix((vals, (rows, cols)), shape=(r, n))
    return G, np.asarray(h), tuple(out)


# ---------------------------------------------------------------------------
# Layout and leader-side constraints


def _build_layout(cfg: ScenarioConfig, md: _ModelData, *, kkt: bool, prices_as_vars: bool = True,
                  dr_as_vars: bool = True) -> VarIndex:
    T = md.T
    lay = _Layout()
    if prices_as_vars:
        lay.add("price_e", T)
        lay.add("price_h", T)
    for u in cfg.units_tp:
        lay.add(f"tp:{u.name}:p", T)
    for u in cfg.units_chp:
        lay.add(f"chp:{u.name}:p", T)
        lay.add(f"chp:{u.name}:h", T)
    for r in cfg.renewables:
        lay.add(f"ren:{r.name}:p", T)
    for s in cfg.storages:
        tag = "es" if s.kind == "electric" else "hs"
        lay.add(f"{tag}:{s.name}:cha", T)
        lay.add(f"{tag}:{s.name}:dis", T)
        lay.add(f"{tag}:{s.name}:soc", T)
    if cfg.boiler.capacity > 0:
        lay.add("boiler:p", T)
    for u in cfg.units_tp:
        lay.add(f"rsv:{u.name}", T)
    for u in cfg.units_chp:
        lay.add(f"rsv:{u.name}", T)
    for s in cfg.storages:
        if s.kind == "electric":
            lay.add(f"rsv:{s.name}", T)
    lay.add("inj_res", T)
    lay.add("inj_pub", T)
    if dr_as_vars:
        lay.add("shift", T)
        lay.add("cut_res", T)
        lay.add("cut_pub", T)
    if kkt:
        lay.add("shift_budget_mult", 1)
        for fam in PAIR_FAMILIES:
            lay.add(f"mult_{fam}", T)
        for fam in PAIR_FAMILIES:
            lay.add(f"switch_{fam}", T)
    return lay.freeze()


def _bounds(cfg: ScenarioConfig, idx: VarIndex, md: _ModelData) -> tuple[np.ndarray, np.ndarray]:
    T = md.T
    lb = np.full(idx.n, -np.inf)
    ub = np.full(idx.n, np.inf)

    def box(key, lo, hi):
        if idx.has(key):
            lb[idx.sl(key)] = lo
            ub[idx.sl(key)] = hi

    box("price_e", cfg.prices.e_min, cfg.prices.e_max)
    box("price_h", cfg.prices.h_min, cfg.prices.h_max)
    for u in cfg.units_tp:
        box(f"tp:{u.name}:p", u.p_min, u.p_max)
    for u in cfg.units_chp:
        box(f"chp:{u.name}:p", u.p_min, u.p_max)
        box(f"chp:{u.name}:h", 0.0, u.h_max)
    for r in cfg.renewables:
        box(f"ren:{r.name}:p", 0.0, md.avail_by_plant[r.name])
    for s in cfg.storages:
        tag = "es" if s.kind == "electric" else "hs"
        box(f"{tag}:{s.name}:cha", 0.0, s.charge_max)
        box(f"{tag}:{s.name}:dis", 0.0, s.discharge_max)
        box(f"{tag}:{s.name}:soc", s.soc_min, s.soc_max)
    if idx.has("boiler:p"):
        box("boiler:p", 0.0, cfg.boiler.capacity)
    # Reserve offers are row-capped by headroom and ramp; mirror the
    # structural ceiling in the box so every column stays bounded.
    for u in list(cfg.units_tp) + list(cfg.units_chp):
        if idx.has(f"rsv:{u.name}"):
            box(f"rsv:{u.name}", 0.0, min(u.ramp_up * md.dt, u.p_max - u.p_min))
    for s in cfg.storages:
        if idx.has(f"rsv:{s.name}"):
            box(f"rsv:{s.name}", 0.0,
                s.eta_discharge * s.discharge_max + s.charge_max / s.eta_charge)
    box("inj_res", md.transport.res.inj_min, md.transport.res.inj_max)
    box("inj_pub", md.transport.pub.inj_min, md.transport.pub.inj_max)
    if idx.has("shift"):
        box("shift", -md.s_max, md.s_max)
        box("cut_res", 0.0, md.x_max)
        box("cut_pub", 0.0, md.y_max)
    if idx.has("shift_budget_mult"):
        # Every paired multiplier obeys lam + M nu <= M with nu >= 0, so M
        # bounds it outright; the shift stationarity identity then brackets
        # the budget multiplier within one tariff spread of that.
        box("shift_budget_mult",
            -cfg.prices.e_max - cfg.big_m, -cfg.prices.e_min + cfg.big_m)
        for fam in PAIR_FAMILIES:
            box(f"mult_{fam}", 0.0, cfg.big_m)
            box(f"switch_{fam}", 0.0, 1.0)
    return lb, ub


class _RowBuilder:
    def __init__(self, n):
        self.n = n
        self.rows, self.cols, self.vals, self.rhs = [], [], [], []
        self.m = 0

    def add(self, entries: list[tuple[int, float]], rhs: float):
        for c, v in entries:
            self.rows.append(self.m)
            self.cols.append(c)
            self.vals.append(v)
        self.rhs.append(rhs)
        self.m += 1

    def matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        return (
            sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=(self.m, self.n)),
            np.asarray(self.rhs, dtype=float),
        )


def _leader_equalities(cfg, idx, md, *, dr_fixed=None, include_prices=True):
    """Balances, storage dynamics, price means, shift budget."""
    T, dt = md.T, md.dt
    prof = cfg.profile
    eq = _RowBuilder(idx.n)
    s_fix, x_fix, y_fix = dr_fixed if dr_fixed is not None else (None, None, None)

    # Power balance per hour.
    for t in range(T):
        ent = []
        for u in cfg.units_tp:
            ent.append((idx.col(f"tp:{u.name}:p", t), 1.0))
        for u in cfg.units_chp:
            ent.append((idx.col(f"chp:{u.name}:p", t), 1.0))
        for r in cfg.renewables:
            ent.append((idx.col(f"ren:{r.name}:p", t), 1.0))
        for s in cfg.storages:
            if s.kind == "electric":
                ent.append((idx.col(f"es:{s.name}:dis", t), s.eta_discharge))
                ent.append((idx.col(f"es:{s.name}:cha", t), -1.0 / s.eta_charge))
        if idx.has("boiler:p"):
            ent.append((idx.col("boiler:p", t), -1.0))
        rhs = prof.p_load[t]
        if idx.has("shift"):
            ent.append((idx.col("shift", t), -1.0))
        else:
            rhs += s_fix[t]
        eq.add(ent, rhs)

    # Heat source balance: production equals total injection.
    for t in range(T):
        ent = []
        for u in cfg.units_chp:
            ent.append((idx.col(f"chp:{u.name}:h", t), 1.0))
        for s in cfg.storages:
            if s.kind == "heat":
                ent.append((idx.col(f"hs:{s.name}:dis", t), s.eta_discharge))
                ent.append((idx.col(f"hs:{s.name}:cha", t), -1.0 / s.eta_charge))
        if idx.has("boiler:p"):
            ent.append((idx.col("boiler:p", t), cfg.boiler.efficiency))
        ent.append((idx.col("inj_res", t), -1.0))
        ent.append((idx.col("inj_pub", t), -1.0))
        eq.add(ent, 0.0)

    # Delivery per zone: delayed injection minus transport loss equals
    # base load net of curtailment (delays wrap around the horizon).
    for zone, cut, fix in (("res", "cut_res", x_fix), ("pub", "cut_pub", y_fix)):
        tr = md.transport.res if zone == "res" else md.transport.pub
        base = prof.h_load_res if zone == "res" else prof.h_load_pub
        for t in range(T):
            ent = [(idx.col(f"inj_{zone}", (t - tr.delay_steps) % T), 1.0)]
            rhs = base[t] + tr.loss[t]
            if idx.has(cut):
                ent.append((idx.col(cut, t), 1.0))
            else:
                rhs -= fix[t]
            eq.add(ent, rhs)

    # Storage dynamics (medium-side accounting) with cyclic endpoint.
    for s in cfg.storages:
        tag = "es" if s.kind == "electric" else "hs"
        soc0 = s.soc_min + cfg.soc_init_frac * (s.soc_max - s.soc_min)
        for t in range(T):
            ent = [(idx.col(f"{tag}:{s.name}:soc", t), 1.0),
                   (idx.col(f"{tag}:{s.name}:cha", t), -dt),
                   (idx.col(f"{tag}:{s.name}:dis", t), dt)]
            if t == 0:
                eq.add(ent, soc0)
            else:
                ent.append((idx.col(f"{tag}:{s.name}:soc", t - 1), -1.0))
                eq.add(ent, 0.0)
        eq.add([(idx.col(f"{tag}:{s.name}:soc", T - 1), 1.0)], soc0)

    if include_prices and idx.has("price_e"):
        eq.add([(idx.col("price_e", t), 1.0) for t in range(T)], T * cfg.prices.e_mean)
        eq.add([(idx.col("price_h", t), 1.0) for t in range(T)], T * cfg.prices.h_mean)

    if idx.has("shift"):
        eq.add([(idx.col("shift", t), 1.0) for t in range(T)], md.budget)
    return eq


def _leader_inequalities(cfg, idx, md):
    """Ramps, reserve headroom and coverage, as G x <= h rows."""
    T, dt = md.T, md.dt
    G = _RowBuilder(idx.n)
    for u in list(cfg.units_tp) + list(cfg.units_chp):
        tag = "tp" if u in cfg.units_tp else "chp"
        key = f"{tag}:{u.name}:p"
        for t in range(1, T):
            G.add([(idx.col(key, t), 1.0), (idx.col(key, t - 1), -1.0)], u.ramp_up * dt)
        for t in range(1, T):
            G.add([(idx.col(key, t), -1.0), (idx.col(key, t - 1), 1.0)], u.ramp_down * dt)
    # Spinning reserve: headroom and ramp cap per provider.
    for u in list(cfg.units_tp) + list(cfg.units_chp):
        tag = "tp" if u in cfg.units_tp else "chp"
        for t in range(T):
            G.add([(idx.col(f"rsv:{u.name}", t), 1.0), (idx.col(f"{tag}:{u.name}:p", t), 1.0)], u.p_max)
        for t in range(T):
            G.add([(idx.col(f"rsv:{u.name}", t), 1.0)], u.ramp_up * dt)
    for s in cfg.storages:
        if s.kind != "electric":
            continue
        for t in range(T):
            G.add(
                [
                    (idx.col(f"rsv:{s.name}", t), 1.0),
                    (idx.col(f"es:{s.name}:dis", t), s.eta_discharge),
                    (idx.col(f"es:{s.name}:cha", t), -1.0 / s.eta_charge),
                ],
                s.eta_discharge * s.discharge_max,
            )
    providers = [u.name for u in cfg.units_tp] + [u.name for u in cfg.units_chp] + [
        s.name for s in cfg.storages if s.kind == "electric"
    ]
    for t in range(T):
        G.add([(idx.col(f"rsv:{p}", t), -1.0) for p in providers], -cfg.reserve_z * md.sigma[t])
    return G


# ---------------------------------------------------------------------------
# Objective pieces


def _cost_terms(cfg, idx, md):
    """Operating-cost objective: (Q triplets in 1/2 x'Qx form, c, constant)."""
    T, dt = md.T, md.dt
    Qt: list[tuple[int, int, float]] = []
    c = np.zeros(idx.n)
    const = 0.0
    for u in cfg.units_tp:
        for t in range(T):
            j = idx.col(f"tp:{u.name}:p", t)
            Qt.append((j, j, 2.0 * u.cost_a * dt))
            c[j] += u.cost_b * dt
        const += u.cost_c * T * dt
    for u in cfg.units_chp:
        for t in range(T):
            jp = idx.col(f"chp:{u.name}:p", t)
            jh = idx.col(f"chp:{u.name}:h", t)
            a, cv = u.cost_a, u.cv_ratio
            Qt.append((jp, jp, 2.0 * a * dt))
            Qt.append((jh, jh, 2.0 * a * cv * cv * dt))
            Qt.append((jp, jh, 2.0 * a * cv * dt))
            Qt.append((jh, jp, 2.0 * a * cv * dt))
            c[jp] += u.cost_b * dt
            c[jh] += u.cost_b * cv * dt
        const += u.cost_c * T * dt
    for u in list(cfg.units_tp) + list(cfg.units_chp):
        for t in range(T):
            c[idx.col(f"rsv:{u.name}", t)] += u.reserve_price * dt
    for s in cfg.storages:
        tag = "es" if s.kind == "electric" else "hs"
        for t in range(T):
            c[idx.col(f"{tag}:{s.name}:cha", t)] += s.cycle_cost * dt
            c[idx.col(f"{tag}:{s.name}:dis", t)] += s.cycle_cost * dt
        if s.kind == "electric" and idx.has(f"rsv:{s.name}"):
            for t in range(T):
                c[idx.col(f"rsv:{s.name}", t)] += s.reserve_price * dt
    # Curtailment penalty on spilled renewable energy.
    for r in cfg.renewables:
        a = md.avail_by_plant[r.name]
        for t in range(T):
            c[idx.col(f"ren:{r.name}:p", t)] -= cfg.curtail_penalty * dt
        const += cfg.curtail_penalty * float(np.sum(a)) * dt
    # Compensation paid per MWh of curtailed heat (when cuts are variables).
    if idx.has("cut_res"):
        for t in range(T):
            c[idx.col("cut_res", t)] += cfg.dr_compensation * dt
            c[idx.col("cut_pub", t)] += cfg.dr_compensation * dt
    return Qt, c, const


def eliminate_bilinear_revenue(cfg: ScenarioConfig, idx: VarIndex, md: _ModelData):
    """Exact substitute for the revenue at a point satisfying the KKT rows.

    The price*response products are replaced using stationarity and
    complementarity:  sum(pe*shift) = -mult_budget*B - sum(smax*(m_lo+m_hi));
    ph*cut = 2 psi cut^2 + m_hi*cut_max.  Returns (Q triplets, c, const)
    for the revenue itself (builders subtract it from costs).
    """
    T, dt = md.T, md.dt
    prof = cfg.profile
    Qt: list[tuple[int, int, float]] = []
    c = np.zeros(idx.n)
    const = 0.0
    for t in range(T):
        c[idx.col("price_e", t)] += prof.p_load[t] * dt
        c[idx.col("price_h", t)] += (prof.h_load_res[t] + prof.h_load_pub[t]) * dt
    c[idx.col("shift_budget_mult")] -= md.budget * dt
    for t in range(T):
        c[idx.col("mult_shift_lo", t)] -= md.s_max[t] * dt
        c[idx.col("mult_shift_hi", t)] -= md.s_max[t] * dt
        c[idx.col("mult_cut_res_hi", t)] -= md.x_max[t] * dt
        c[idx.col("mult_cut_pub_hi", t)] -= md.y_max[t] * dt
        for cut in ("cut_res", "cut_pub"):
            j = idx.col(cut, t)
            Qt.append((j, j, -4.0 * cfg.psi * dt))
    return Qt, c, const


# ---------------------------------------------------------------------------
# Feasibility screen


def _screen(cfg, md, kkt=False):
    T = md.T
    prof = cfg.profile

    def fail(family, t, detail):
        raise AssemblyError(f"pre-solve infeasibility in family {family!r} at hour {t}: {detail}")

    p_max = sum(u.p_max for u in cfg.units_tp) + sum(u.p_max for u in cfg.units_chp)
    p_min = sum(u.p_min for u in cfg.units_tp) + sum(u.p_min for u in cfg.units_chp)
    dis = sum(s.eta_discharge * s.discharge_max for s in cfg.storages if s.kind == "electric")
    cha = sum(s.charge_max / s.eta_charge for s in cfg.storages if s.kind == "electric")
    h_max = sum(u.h_max for u in cfg.units_chp) + cfg.boiler.capacity * cfg.boiler.efficiency
    h_dis = sum(s.eta_discharge * s.discharge_max for s in cfg.storages if s.kind == "heat")
    h_cha = sum(s.charge_max / s.eta_charge for s in cfg.storages if s.kind == "heat")
    for t in range(T):
        hi = p_max + md.avail_w[t] + md.avail_pv[t] + dis
        lo = p_min - cha
        if hi < prof.p_load[t] - md.s_max[t] - 1e-9:
            fail("power-balance", t, f"max supply {hi:.3f} < min load {prof.p_load[t] - md.s_max[t]:.3f} MW")
        if lo > prof.p_load[t] + md.s_max[t] + cfg.boiler.capacity + 1e-9:
            fail("power-balance", t, f"min generation {lo:.3f} MW exceeds max load")
        inj_lo = md.transport.res.inj_min + md.transport.pub.inj_min
        inj_hi = md.transport.res.inj_max + md.transport.pub.inj_max
        if h_max + h_dis < inj_lo - 1e-9:
            fail("heat-source", t, f"max heat output {h_max + h_dis:.3f} < min injection {inj_lo:.3f} MW")
        if -h_cha > inj_hi + 1e-9:
            fail("heat-source", t, "cannot absorb the minimum possible injection")
    for zone, base, cutm in (
        ("res", prof.h_load_res, md.x_max),
        ("pub", prof.h_load_pub, md.y_max),
    ):
        tr = md.transport.res if zone == "res" else md.transport.pub
        for t in range(T):
            cut_lo, cut_hi = 0.0, cutm[t]
            if kkt and cutm[t] > 1e-12:
                # With stationarity in force the cut tracks the heat price:
                # clip(price / (2 psi), 0, ceiling).  Over the admissible
                # tariff box that pins the cut into a sub-interval, which
                # shrinks the range of deliveries the network must cover.
                cut_lo = min(cfg.prices.h_min / (2.0 * cfg.psi), cutm[t])
                cut_hi = min(cfg.prices.h_max / (2.0 * cfg.psi), cutm[t])
            need_lo = base[t] - cut_hi + tr.loss[t]
            need_hi = base[t] - cut_lo + tr.loss[t]
            if tr.inj_max < need_lo - 1e-9:
                fail("heat-delivery", t, f"zone {zone}: injection cap {tr.inj_max:.3f} < minimum delivery {need_lo:.3f} MW")
            if tr.inj_min > need_hi + 1e-9:
                fail("heat-delivery", t,
                     f"zone {zone}: injection floor {tr.inj_min:.3f} > largest deliverable load {need_hi:.3f} MW"
                     + (" (cut forced by tariff floor)" if kkt and cut_lo > 0 else ""))
    rsv_cap = sum(min(u.ramp_up * md.dt, u.p_max) for u in list(cfg.units_tp) + list(cfg.units_chp))
    rsv_cap += sum(s.eta_discharge * s.discharge_max + s.charge_max / s.eta_charge
                   for s in cfg.storages if s.kind == "electric")
    for t in range(T):
        if rsv_cap < cfg.reserve_z * md.sigma[t] - 1e-9:
            fail("reserve", t, f"capacity {rsv_cap:.3f} < requirement {cfg.reserve_z * md.sigma[t]:.3f} MW")


# ---------------------------------------------------------------------------
# Top-level builders


def assemble_single_level(cfg: ScenarioConfig, mode: int = 5) -> MIQPProblem:
    """Full single-level convex MIQP for one operating mode.

    Leader dispatch and prices, customer KKT rows, big-M complementarity
    switches, and the substituted (bilinear-free) profit objective,
    minimized as costs - revenue.  Logically-forced switches are fixed
    via their bounds before search: a positive cut ceiling with strictly
    positive heat prices forces the lower-bound multiplier of that cut to
    zero, and zero-width pairs pin their switch at 0.
    """
    md = _model_data(cfg, mode)
    _screen(cfg, md, kkt=True)
    idx = _build_layout(cfg, md, kkt=True)
    kkt = _kkt_for_layout(cfg, idx, md)

    eq = _leader_equalities(cfg, idx, md)
    A_lead, b_lead = eq.matrix()
    A = sp.vstack([A_lead, kkt.stat_rows], format="csr")
    b = np.r_[b_lead, kkt.stat_rhs]

    lb, ub = _bounds(cfg, idx, md)
    # Switch pre-fixing.
    T = md.T
    for p in kkt.pairs:
        if p.width <= 1e-12:
            lb[p.nu_col] = ub[p.nu_col] = 0.0
    if cfg.prices.h_min > 0:
        for fam, widths in (("cut_res_lo", md.x_max), ("cut_pub_lo", md.y_max)):
            for t in range(T):
                if widths[t] > 1e-12:
                    j = idx.col(f"switch_{fam}", t)
                    lb[j] = ub[j] = 1.0
                    lam = idx.col(f"mult_{fam}", t)
                    ub[lam] = 0.0
    # The response tracks clip(price / (2 psi), 0, ceiling), so a price box
    # that keeps it strictly on one side of the ceiling decides the upper
    # pair too: strictly interior at the dearest admissible tariff means the
    # ceiling multiplier stays zero; pinned at the ceiling even at the
    # cheapest tariff means the ceiling slack stays zero.  In between, the
    # ceiling multiplier equals tariff - 2 psi ceiling whenever positive
    # (its activity forces the floor pair inactive), which caps it far
    # below the generic big-M and tightens every node relaxation.
    for fam, widths in (("cut_res_hi", md.x_max), ("cut_pub_hi", md.y_max)):
        for t in range(T):
            lam = idx.col(f"mult_{fam}", t)
            if widths[t] <= 1e-12:
                # Zero room: the response sits at zero and stationarity
                # reads lam_hi = tariff + lam_lo.
                ub[lam] = min(ub[lam], cfg.prices.h_max + max(0.0, -cfg.prices.h_min))
                continue
            j = idx.col(f"switch_{fam}", t)
            cap = cfg.prices.h_max - 2.0 * cfg.psi * widths[t]
            if cfg.prices.h_max < 2.0 * cfg.psi * widths[t] * (1.0 - 1e-9):
                lb[j] = ub[j] = 1.0
                ub[lam] = 0.0
            elif cfg.prices.h_min > 2.0 * cfg.psi * widths[t] * (1.0 + 1e-9):
                lb[j] = ub[j] = 0.0
                ub[lam] = min(ub[lam], max(0.0, cap))
            else:
                ub[lam] = min(ub[lam], max(0.0, cap))
    for fam in ("cut_res_lo", "cut_pub_lo"):
        for t in range(T):
            lam = idx.col(f"mult_{fam}", t)
            ub[lam] = min(ub[lam], max(0.0, -cfg.prices.h_min))
    # A budget strictly inside the total shift room leaves, at every
    # integral-feasible point, some hour off its floor and some hour off
    # its ceiling; their stationarity rows bracket the budget multiplier by
    # [-e_max, -e_min], which in turn caps both shift-bound multipliers at
    # the tariff spread.
    if np.any(md.s_max > 1e-12) and abs(md.budget) < float(md.s_max.sum()) - 1e-9:
        if idx.has("shift_budget_mult"):
            eps = idx.col("shift_budget_mult")
            lb[eps] = max(lb[eps], -cfg.prices.e_max)
            ub[eps] = min(ub[eps], -cfg.prices.e_min)
        spread = cfg.prices.e_max - cfg.prices.e_min
        for fam in ("shift_lo", "shift_hi"):
            for t in range(T):
                if md.s_max[t] > 1e-12:
                    lam = idx.col(f"mult_{fam}", t)
                    ub[lam] = min(ub[lam], spread)

    Gb = _leader_inequalities(cfg, idx, md)
    G_lead, h_lead = Gb.matrix()
    G_m, h_m, pairs = big_m_linearize(kkt.pairs, idx.n, cfg.big_m, G_lead.shape[0])
    # Opposing bounds of one variable cannot both be tight when the box has
    # width, so at least one switch of the (lo, hi) couple is released:
    # nu_lo + nu_hi >= 1.  Fixing both at 0 then cancels to "0 <= -1" and
    # node reduction prunes the assignment outright.
    lrows, lcols, lvals, lh = [], [], [], []
    nlogic = 0
    by_key = {(p.label, p.t): p for p in kkt.pairs}
    for lo_fam, hi_fam in (("shift_lo", "shift_hi"),
                           ("cut_res_lo", "cut_res_hi"),
                           ("cut_pub_lo", "cut_pub_hi")):
        for t in range(T):
            lo, hi = by_key[(lo_fam, t)], by_key[(hi_fam, t)]
            if lo.width <= 1e-12:
                continue
            lrows += [nlogic, nlogic]
            lcols += [lo.nu_col, hi.nu_col]
            lvals += [-1.0, -1.0]
            lh.append(-1.0)
            nlogic += 1
    G_logic = sp.csr_matrix((lvals, (lrows, lcols)), shape=(nlogic, idx.n))
    G = sp.vstack([G_lead, G_m, G_logic], format="csr")
    h = np.r_[h_lead, h_m, np.asarray(lh)]

    Qt, c, const = _cost_terms(cfg, idx, md)
    Qr, cr, constr = eliminate_bilinear_revenue(cfg, idx, md)
    Qt += [(i, j, -v) for (i, j, v) in Qr]
    c = c - cr
    const -= constr

    rows = [i for (i, j, v) in Qt]
    cols = [j for (i, j, v) in Qt]
    vals = [v for (i, j, v) in Qt]
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(idx.n, idx.n))
    qp = QuadraticProgram.build(Q, c, A, b, G, h, lb, ub, idx.names)

    binaries = tuple(
        idx.col(f"switch_{fam}", t) for fam in PAIR_FAMILIES for t in range(md.T)
    )
    return MIQPProblem(
        qp=qp,
        binaries=binaries,
        big_m=cfg.big_m,
        pairs=pairs,
        index=idx,
        constant=const,
        meta={
            "mode": mode,
            "n_lead_eq": A_lead.shape[0],
            "s_max": md.s_max,
            "x_max": md.x_max,
            "y_max": md.y_max,
            "transport": md.transport,
            "sigma": md.sigma,
            "avail_w": md.avail_w,
            "avail_pv": md.avail_pv,
            "cut_res": md.cut_res,
            "cut_pub": md.cut_pub,
            "budget": md.budget,
        },
    )


def tou_prices(cfg: ScenarioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Static three-block tariffs hitting the same means inside the boxes.

    Hours are split into valley/flat/peak terciles of the base load (ties
    by hour); block prices start proportional to the block-average load
    and are then shifted and clipped so the daily mean is met exactly.
    """
    validate_config(cfg)
    prof = cfg.profile
    pe = _three_block(prof.p_load, cfg.prices.e_min, cfg.prices.e_max, cfg.prices.e_mean)
    ph = _three_block(prof.h_load_res + prof.h_load_pub, cfg.prices.h_min,
                      cfg.prices.h_max, cfg.prices.h_mean)
    return pe, ph


def _three_block(load: np.ndarray, lo: float, hi: float, mean: float) -> np.ndarray:
    T = len(load)
    order = np.argsort(load, kind="stable")
    n1 = n3 = T // 3
    price = np.empty(T)
    avg = float(np.mean(load))
    groups = (order[:n1], order[n1 : T - n3], order[T - n3 :])
    for g in groups:
        if len(g):
            price[g] = mean * float(np.mean(load[g])) / avg
    # Shift-and-clip to restore the exact mean inside the box.
    lo_d, hi_d = lo - price.max(), hi - price.min()
    for _ in range(200):
        mid = 0.5 * (lo_d + hi_d)
        if float(np.mean(np.clip(price + mid, lo, hi))) < mean:
            lo_d = mid
        else:
            hi_d = mid
    out = np.clip(price + 0.5 * (lo_d + hi_d), lo, hi)
    interior = (out > lo + 1e-9) & (out < hi - 1e-9)
    resid = mean - float(np.mean(out))
    if np.any(interior):
        out[interior] += resid * T / int(np.sum(interior))
    return np.clip(out, lo, hi)


def build_single_layer_model(cfg: ScenarioConfig, mode: int = 6):
    """Planner QP at fixed time-of-use tariffs (no game, no binaries).

    The operator controls the demand-response levers directly and counts
    the quadratic customer discomfort as its own cost; prices only enter
    through the (now linear) revenue.  Returns
    (qp, index, tariff_e, tariff_h, constant).
    """
    md = _model_data(cfg, mode)
    _screen(cfg, md)
    idx = _build_layout(cfg, md, kkt=False, prices_as_vars=False)
    pe, ph = tou_prices(cfg)
    prof = cfg.profile

    eq = _leader_equalities(cfg, idx, md, include_prices=False)
    A, b = eq.matrix()
    G, h = _leader_inequalities(cfg, idx, md).matrix()
    Qt, c, const = _cost_terms(cfg, idx, md)
    T, dt = md.T, md.dt
    for t in range(T):
        jx, jy, js = idx.col("cut_res", t), idx.col("cut_pub", t), idx.col("shift", t)
        Qt.append((jx, jx, 2.0 * cfg.psi * dt))
        Qt.append((jy, jy, 2.0 * cfg.psi * dt))
        # Revenue at fixed tariffs: subtract its linear response terms.
        c[js] -= pe[t] * dt
        c[jx] += ph[t] * dt
        c[jy] += ph[t] * dt
    const -= float(pe @ prof.p_load + ph @ (prof.h_load_res + prof.h_load_pub)) * dt
    lb, ub = _bounds(cfg, idx, md)
    rows = [i for (i, j, v) in Qt]
    cols = [j for (i, j, v) in Qt]
    vals = [v for (i, j, v) in Qt]
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(idx.n, idx.n))
    qp = QuadraticProgram.build(Q, c, A, b, G, h, lb, ub, idx.names)
    return qp, idx, pe, ph, const


def build_dispatch_qp(cfg: ScenarioConfig, s: np.ndarray, x: np.ndarray, y: np.ndarray, mode: int = 5):
    """Leader cost-minimizing dispatch with the customer response frozen.

    Used for equilibrium verification: given prices (which only shift
    revenue by a constant) and a fixed response, the best the operator
    can do is minimize operating cost subject to serving that response.
    Returns (qp, index, constant) where constant carries the fixed
    DR-compensation cost.
    """
    md = _model_data(cfg, mode)
    idx = _build_layout(cfg, md, kkt=False, prices_as_vars=False, dr_as_vars=False)
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    eq = _leader_equalities(cfg, idx, md, dr_fixed=(s, x, y), include_prices=False)
    A, b = eq.matrix()
    G, h = _leader_inequalities(cfg, idx, md).matrix()
    Qt, c, const = _cost_terms(cfg, idx, md)
    const += cfg.dr_compensation * float(np.sum(x) + np.sum(y)) * md.dt
    lb, ub = _bounds(cfg, idx, md)
    rows = [i for (i, j, v) in Qt]
    cols = [j for (i, j, v) in Qt]
    vals = [v for (i, j, v) in Qt]
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(idx.n, idx.n))
    qp = QuadraticProgram.build(Q, c, A, b, G, h, lb, ub, idx.names)
    return qp, idx, const


# ---------------------------------------------------------------------------
# Reporting


def objective_value_direct(
    cfg: ScenarioConfig,
    idx: VarIndex,
    xv: np.ndarray,
    kappa_e: np.ndarray | None = None,
    kappa_h: np.ndarray | None = None,
    dr: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
    avail: tuple[np.ndarray, np.ndarray] | None = None,
) -> dict[str, float]:
    """Profit accounting with the true bilinear products, no substitution.

    Returns component totals plus ``objective`` = costs - revenue (the
    minimized quantity) and ``profit`` = -objective.  Price and response
    vectors default to the model's own columns.
    """
    prof = cfg.profile
    dt = cfg.delta_t
    pe = np.asarray(kappa_e, float) if kappa_e is not None else idx.get("price_e", xv)
    ph = np.asarray(kappa_h, float) if kappa_h is not None else idx.get("price_h", xv)
    if dr is not None:
        s, x, y = (np.asarray(v, float) for v in dr)
    else:
        s, x, y = idx.get("shift", xv), idx.get("cut_res", xv), idx.get("cut_pub", xv)

    revenue_e = float(pe @ (prof.p_load + s)) * dt
    revenue_h = float(ph @ (prof.h_load_res - x + prof.h_load_pub - y)) * dt

    fuel = 0.0
    for u in cfg.units_tp:
        fuel += float(np.sum([u.fuel_cost(p) for p in idx.get(f"tp:{u.name}:p", xv)])) * dt
    for u in cfg.units_chp:
        pp = idx.get(f"chp:{u.name}:p", xv)
        hh = idx.get(f"chp:{u.name}:h", xv)
        fuel += float(np.sum([u.fuel_cost(p, hv) for p, hv in zip(pp, hh)])) * dt
    reserve_cost = 0.0
    for u in list(cfg.units_tp) + list(cfg.units_chp):
        reserve_cost += u.reserve_price * float(np.sum(idx.get(f"rsv:{u.name}", xv))) * dt
    cycle = 0.0
    for st in cfg.storages:
        tag = "es" if st.kind == "electric" else "hs"
        cycle += st.cycle_cost * float(
            np.sum(idx.get(f"{tag}:{st.name}:cha", xv)) + np.sum(idx.get(f"{tag}:{st.name}:dis", xv))
        ) * dt
        if st.kind == "electric" and idx.has(f"rsv:{st.name}"):
            reserve_cost += st.reserve_price * float(np.sum(idx.get(f"rsv:{st.name}", xv))) * dt
    if avail is not None:
        aw, apv = avail
    else:
        aw = np.zeros(cfg.horizon)
        apv = np.zeros(cfg.horizon)
        for r in cfg.renewables:
            if r.kind == "wind":
                aw = aw + np.asarray(wind_power(prof.wind_speed, r))
            else:
                apv = apv + np.asarray(pv_power(prof.pv_avail, r))
    spilled = float(np.sum(aw) + np.sum(apv))
    for r in cfg.renewables:
        spilled -= float(np.sum(idx.get(f"ren:{r.name}:p", xv)))
    curtail = cfg.curtail_penalty * spilled * dt
    dr_comp = cfg.dr_compensation * float(np.sum(x) + np.sum(y)) * dt
    discomfort = cfg.psi * float(x @ x + y @ y) * dt

    costs = fuel + reserve_cost + cycle + curtail + dr_comp
    objective = costs - revenue_e - revenue_h
    return {
        "revenue_e": revenue_e,
        "revenue_h": revenue_h,
        "fuel": fuel,
        "reserve_cost": reserve_cost,
        "cycle_cost": cycle,
        "curtail_penalty": curtail,
        "dr_compensation": dr_comp,
        "discomfort": discomfort,
        "costs": costs,
        "objective": objective,
        "profit": -objective,
    }


def dump_model(mp: MIQPProblem) -> str:
    """Human-greppable text dump: sizes, names, sparse triplets, switches."""
    qp = mp.qp
    out = [
        f"vars {qp.n} eq {qp.A.shape[0]} ineq {qp.G.shape[0]} binaries {len(mp.binaries)} big_m {mp.big_m:g}",
        f"constant {mp.constant:.17g}",
        "# names",
    ]
    out.extend(f"{i} {nm}" for i, nm in enumerate(qp.names))
    for tag, M in (("Q", qp.Q), ("A", qp.A), ("G", qp.G)):
        coo = M.tocoo()
        out.append(f"# {tag} nnz {coo.nnz}")
        out.extend(f"{tag} {i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data))
    out.append("# rhs")
    out.extend(f"b {i} {v:.17g}" for i, v in enumerate(qp.b))
    out.extend(f"h {i} {v:.17g}" for i, v in enumerate(qp.h))
    out.append("# bounds (finite only)")
    for i in range(qp.n):
        if np.isfinite(qp.lb[i]) or np.isfinite(qp.ub[i]):
            out.append(f"x {i} {qp.lb[i]:.17g} {qp.ub[i]:.17g}")
    out.append("# pairs label t nu lam slack_row mult_row width")
    out.extend(
        f"pair {p.label} {p.t} {p.nu_col} {p.lam_col} {p.slack_row} {p.mult_row} {p.width:.17g}"
        for p in mp.pairs
    )
    return "\n".join(out) + "\n"
