"""End-to-end experiment orchestration.

Synthesizes a winter scheduling day, runs the six operating modes (game
MIQP for modes 1-5, fixed-tariff planner QP for mode 6), audits each
solution (first-order conditions, balances, tariff means, accounting
identities), and sweeps the residential share of the heated volume.

Trend observations across modes and sweep points are reported, never
asserted: the input day is synthetic, so only structural properties are
hard requirements.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import (
    MIQPProblem,
    assemble_single_level,
    build_lower_qp,
    build_single_layer_model,
    objective_value_direct,
)
from .comfort import heating_power_for_temp, surface_from_shape, temp_from_pmv
from .datamodel import (
    BuildingZone,
    ComfortWindow,
    LoadProfile,
    RenewablePlant,
    ScenarioConfig,
    pv_power,
    validate_config,
    wind_power,
)
from .miqp import solve_miqp
from .oracle import follower_best_response
from .qp import qp_objective, solve_convex_qp

__all__ = [
    "RunnerError",
    "ProfileShape",
    "ScheduleSolution",
    "RunSummary",
    "SensitivityRow",
    "synthesize_profiles",
    "reserve_requirements",
    "run_mode",
    "compare_modes",
    "sensitivity_residential_fraction",
    "kkt_audit",
    "balance_audit",
]


class RunnerError(RuntimeError):
    """A run could not produce a trustworthy solution."""


# ---------------------------------------------------------------------------
# Synthetic scheduling day


@dataclass(frozen=True)
class ProfileShape:
    """Knobs of the synthetic winter day."""

    t_out_mean: float = -12.0  # degC
    t_out_amp: float = 4.0  # degC, coldest at coldest_hour
    coldest_hour: int = 3
    p_load_base: float = 430.0  # MW, overnight valley
    p_load_peak: float = 560.0  # MW, evening peak
    wind_mean: float = 9.0  # m/s
    wind_amp: float = 2.5  # m/s, stronger at night
    pv_clearness: float = 0.9  # fraction of the clear-sky bell
    noise_frac: float = 0.02  # relative jitter applied to each series


def synthesize_profiles(
    zone_res: BuildingZone,
    zone_pub: BuildingZone,
    comfort: ComfortWindow,
    seed: int = 0,
    shape: ProfileShape = ProfileShape(),
    T: int = 24,
) -> LoadProfile:
    """Deterministic winter day: cold sinusoid outside, double-peak power
    demand, night-heavy wind, a daylight photovoltaic bell, and heat base
    loads equal to the steady power that holds each zone at the
    neutral-vote setpoint."""
    if T != 24:
        raise ValueError("synthesize_profiles: the day generator is built for T = 24")
    rng = np.random.default_rng(seed)
    h = np.arange(T, dtype=float)

    t_out = shape.t_out_mean - shape.t_out_amp * np.cos(
        2.0 * np.pi * (h - shape.coldest_hour) / T
    )
    t_out = t_out + rng.normal(0.0, shape.noise_frac * shape.t_out_amp, T)

    morning = np.exp(-0.5 * ((h - 9.5) / 2.0) ** 2)
    evening = np.exp(-0.5 * ((h - 19.0) / 2.0) ** 2)
    bump = 0.55 * morning + evening
    p_load = shape.p_load_base + (shape.p_load_peak - shape.p_load_base) * bump / bump.max()
    p_load = p_load * (1.0 + rng.normal(0.0, shape.noise_frac, T))

    wind = shape.wind_mean + shape.wind_amp * np.cos(2.0 * np.pi * h / T)
    wind = np.clip(wind * (1.0 + rng.normal(0.0, 2.0 * shape.noise_frac, T)), 0.0, None)

    pv = np.clip(np.sin(np.pi * (h - 6.0) / 12.0), 0.0, None) * shape.pv_clearness
    pv = np.clip(pv * (1.0 + rng.normal(0.0, shape.noise_frac, T)), 0.0, 1.0)
    pv[(h < 6.0) | (h > 18.0)] = 0.0

    t_neutral = temp_from_pmv(0.0, comfort)
    h_res = np.array([
        heating_power_for_temp(t_neutral, t_neutral, t_out[t], zone_res) for t in range(T)
    ])
    h_pub = np.array([
        heating_power_for_temp(t_neutral, t_neutral, t_out[t], zone_pub) for t in range(T)
    ])
    return LoadProfile(t_out=t_out, wind_speed=wind, pv_avail=pv,
                       p_load=p_load, h_load_res=h_res, h_load_pub=h_pub)


def reserve_requirements(profile: LoadProfile, plants: tuple[RenewablePlant, ...], z: float) -> np.ndarray:
    """Hourly spinning-reserve requirement: coverage factor times the sum
    of each plant's forecast-error share of its expected output."""
    req = np.zeros(profile.horizon)
    for r in plants:
        out = wind_power(profile.wind_speed, r) if r.kind == "wind" else pv_power(profile.pv_avail, r)
        req = req + z * r.forecast_sigma_frac * np.asarray(out)
    return req


# ---------------------------------------------------------------------------
# Mode runs


@dataclass
class ScheduleSolution:
    """Solved schedule with everything reporting needs."""

    mode: int
    status: str
    objective: float  # minimized operator objective (costs - revenue)
    bound: float
    gap: float
    nodes: int
    runtime_s: float
    price_e: np.ndarray
    price_h: np.ndarray
    shift: np.ndarray
    cut_res: np.ndarray
    cut_pub: np.ndarray
    reserve: np.ndarray  # total offered reserve per hour
    series: dict[str, np.ndarray]  # per-column schedule table material
    x: np.ndarray
    problem: MIQPProblem | None  # None for the fixed-tariff planner mode
    index: object
    base_load: np.ndarray = field(default_factory=lambda: np.zeros(0))
    audits: dict[str, float] = field(default_factory=dict)


@dataclass
class RunSummary:
    """Money and volume totals of one run, operator side and customer side."""

    mode: int
    earnings: float
    operating_cost: float
    net_revenue: float
    user_energy_cost: float
    comfort_loss_cost: float
    user_overall_cost: float
    total_heat_cut_mwh: float
    chp_heat_mwh: float
    solver_status: str
    gap: float
    nodes: int
    runtime_s: float
    notes: list[str] = field(default_factory=list)


def kkt_audit(problem: MIQPProblem, x: np.ndarray, lead_rows: int | None = None) -> dict[str, float]:
    """Residuals of the embedded first-order conditions at a solution.

    Returns stationarity residual (customer optimality rows), worst
    complementarity product, and the largest of slack/multiplier across
    pairs relative to the big-M constant (headroom check: the constant
    must never be the binding face).
    """
    qp = problem.qp
    if lead_rows is None:
        lead_rows = int(problem.meta.get("n_lead_eq", 0))
    resid = np.abs(qp.A @ x - qp.b)
    stat = float(np.max(resid[lead_rows:], initial=0.0))
    worst_prod = 0.0
    worst_face = 0.0
    for p in problem.pairs:
        slack = p.slack_rhs - sum(cf * x[cl] for cl, cf in zip(p.slack_cols, p.slack_coefs))
        lam = x[p.lam_col]
        worst_prod = max(worst_prod, max(slack, 0.0) * max(lam, 0.0))
        worst_face = max(worst_face, max(slack, lam))
    return {
        "stationarity": stat,
        "complementarity": worst_prod,
        "big_m_headroom": worst_face / problem.big_m,
    }


def balance_audit(cfg: ScenarioConfig, qp, x: np.ndarray, T: int) -> dict[str, float]:
    """Worst violation of the four balance blocks (power, heat source,
    two zone deliveries) which occupy the first 4T equality rows."""
    resid = np.abs(qp.A @ x - qp.b)
    return {
        "power_balance": float(np.max(resid[0:T])),
        "heat_source_balance": float(np.max(resid[T:2 * T])),
        "delivery_res": float(np.max(resid[2 * T:3 * T])),
        "delivery_pub": float(np.max(resid[3 * T:4 * T])),
    }


def _series(cfg: ScenarioConfig, idx, x: np.ndarray) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for u in cfg.units_tp:
        out[f"p_{u.name}"] = idx.get(f"tp:{u.name}:p", x)
    for u in cfg.units_chp:
        out[f"p_{u.name}"] = idx.get(f"chp:{u.name}:p", x)
        out[f"h_{u.name}"] = idx.get(f"chp:{u.name}:h", x)
    for r in cfg.renewables:
        out[f"p_{r.name}"] = idx.get(f"ren:{r.name}:p", x)
    for s in cfg.storages:
        tag = "es" if s.kind == "electric" else "hs"
        out[f"cha_{s.name}"] = idx.get(f"{tag}:{s.name}:cha", x)
        out[f"dis_{s.name}"] = idx.get(f"{tag}:{s.name}:dis", x)
        out[f"soc_{s.name}"] = idx.get(f"{tag}:{s.name}:soc", x)
    if idx.has("boiler:p"):
        out["p_boiler"] = idx.get("boiler:p", x)
    out["inj_res"] = idx.get("inj_res", x)
    out["inj_pub"] = idx.get("inj_pub", x)
    return out


def _total_reserve(cfg: ScenarioConfig, idx, x: np.ndarray, T: int) -> np.ndarray:
    total = np.zeros(T)
    for u in list(cfg.units_tp) + list(cfg.units_chp):
        total = total + idx.get(f"rsv:{u.name}", x)
    for s in cfg.storages:
        if s.kind == "electric" and idx.has(f"rsv:{s.name}"):
            total = total + idx.get(f"rsv:{s.name}", x)
    return total


def _summarize(cfg: ScenarioConfig, sol: ScheduleSolution) -> RunSummary:
    dt = cfg.delta_t
    prof = cfg.profile
    acct = sol.audits["_acct"]
    earnings = acct["revenue_e"] + acct["revenue_h"]
    operating = acct["costs"]
    user_energy = float(
        sol.price_e @ (prof.p_load + sol.shift)
        + sol.price_h @ (prof.h_load_res - sol.cut_res + prof.h_load_pub - sol.cut_pub)
    ) * dt
    comfort_loss = cfg.psi * float(sol.cut_res @ sol.cut_res + sol.cut_pub @ sol.cut_pub) * dt
    summary = RunSummary(
        mode=sol.mode,
        earnings=earnings,
        operating_cost=operating,
        net_revenue=earnings - operating,
        user_energy_cost=user_energy,
        comfort_loss_cost=comfort_loss,
        user_overall_cost=user_energy + comfort_loss - acct["dr_compensation"],
        total_heat_cut_mwh=float(np.sum(sol.cut_res) + np.sum(sol.cut_pub)) * dt,
        chp_heat_mwh=float(sum(np.sum(sol.series[f"h_{u.name}"]) for u in cfg.units_chp)) * dt,
        solver_status=sol.status,
        gap=sol.gap,
        nodes=sol.nodes,
        runtime_s=sol.runtime_s,
    )
    del sol.audits["_acct"]
    sol.audits["earnings"] = earnings
    return summary


def run_mode(
    cfg: ScenarioConfig,
    mode: int,
    gap_tol: float | None = None,
    workers: int = 1,
    node_limit: int = 20000,
    time_limit: float | None = None,
    verify: bool = True,
) -> tuple[ScheduleSolution, RunSummary]:
    """Solve one operating mode and audit the result.

    Modes 1-5 run the single-level game MIQP; mode 6 runs the
    fixed-tariff planner QP.  ``verify`` adds the customer-side
    equilibrium condition (played levers equal the analytic best
    response) for the game modes; the operator-side perturbation probe is
    separate (``oracle.equilibrium_check``) because it costs a dispatch
    solve per trial.
    """
    validate_config(cfg)
    if mode not in (1, 2, 3, 4, 5, 6):
        raise ValueError(f"run_mode: unknown mode {mode}")
    T = cfg.horizon
    t0 = time.monotonic()
    if mode == 6:
        qp, idx, pe, ph, const = build_single_layer_model(cfg, mode)
        sol_qp = solve_convex_qp(qp, tol=cfg.qp_tol)
        if sol_qp.status != "optimal":
            raise RunnerError(f"mode 6 planner QP ended {sol_qp.status} "
                              f"(iterations {sol_qp.iterations})")
        x = sol_qp.x
        runtime = time.monotonic() - t0
        sched = ScheduleSolution(
            mode=mode, status=sol_qp.status,
            objective=sol_qp.objective + const,
            bound=sol_qp.objective + const, gap=0.0, nodes=1, runtime_s=runtime,
            price_e=pe, price_h=ph,
            shift=idx.get("shift", x), cut_res=idx.get("cut_res", x),
            cut_pub=idx.get("cut_pub", x),
            reserve=_total_reserve(cfg, idx, x, T),
            series=_series(cfg, idx, x), x=x, problem=None, index=idx,
            base_load=np.asarray(cfg.profile.p_load, float),
        )
        sched.audits.update(balance_audit(cfg, qp, x, T))
        acct = objective_value_direct(cfg, idx, x, kappa_e=pe, kappa_h=ph)
        sched.audits["substitution_err"] = abs(acct["objective"] - sched.objective)
        sched.audits["_acct"] = acct
        summary = _summarize(cfg, sched)
        return sched, summary

    problem = assemble_single_level(cfg, mode)
    res = solve_miqp(
        problem,
        gap_tol=cfg.gap_tol if gap_tol is None else gap_tol,
        qp_tol=cfg.qp_tol,
        node_limit=node_limit,
        time_limit=time_limit,
        workers=workers,
    )
    if res.status == "infeasible" or not np.isfinite(res.objective):
        raise RunnerError(f"mode {mode} search ended {res.status} after {res.nodes} nodes "
                          f"(bound {res.bound:.6g})")
    runtime = time.monotonic() - t0
    idx = problem.index
    x = res.x
    sched = ScheduleSolution(
        mode=mode, status=res.status, objective=res.objective, bound=res.bound,
        gap=res.gap, nodes=res.nodes, runtime_s=runtime,
        price_e=idx.get("price_e", x), price_h=idx.get("price_h", x),
        shift=idx.get("shift", x), cut_res=idx.get("cut_res", x),
        cut_pub=idx.get("cut_pub", x),
        reserve=_total_reserve(cfg, idx, x, T),
        series=_series(cfg, idx, x), x=x, problem=problem, index=idx,
        base_load=np.asarray(cfg.profile.p_load, float),
    )
    sched.audits.update(kkt_audit(problem, x))
    sched.audits.update(balance_audit(cfg, problem.qp, x, T))
    sched.audits["price_e_mean_err"] = abs(float(np.mean(sched.price_e)) - cfg.prices.e_mean)
    sched.audits["price_h_mean_err"] = abs(float(np.mean(sched.price_h)) - cfg.prices.h_mean)
    acct = objective_value_direct(
        cfg, idx, x,
        avail=(problem.meta["avail_w"], problem.meta["avail_pv"]),
    )
    sched.audits["substitution_err"] = abs(acct["objective"] - res.objective)
    sched.audits["_acct"] = acct
    summary = _summarize(cfg, sched)
    if verify:
        br = follower_best_response(cfg, sched.price_e, sched.price_h, mode)
        qp_low = build_lower_qp(cfg, sched.price_e, sched.price_h, mode)
        played = np.concatenate([sched.shift, sched.cut_res, sched.cut_pub])
        best = np.concatenate([br.shift, br.cut_res, br.cut_pub])
        fgap = abs(qp_objective(qp_low, played) - qp_objective(qp_low, best))
        sched.audits["follower_gap"] = fgap
        if res.status == "optimal" and fgap > 1e-5 * (1.0 + abs(br.objective)):
            summary.notes.append(
                f"customer response deviates from best response by {fgap:.3e}")
    return sched, summary


def compare_modes(
    cfg: ScenarioConfig,
    modes: tuple[int, ...] = (1, 2, 3, 4, 5, 6),
    gap_tol: float | None = None,
    workers: int = 1,
    node_limit: int = 20000,
    time_limit: float | None = None,
) -> tuple[list[RunSummary], list[str]]:
    """Run several modes and report cross-mode trend observations.

    The trend directions (deeper curtailment when both zones participate,
    more combined-heat output under fixed tariffs) are notes, not
    assertions; the returned flags name any that the dataset inverts.
    """
    summaries: list[RunSummary] = []
    by_mode: dict[int, RunSummary] = {}
    for m in modes:
        _, summary = run_mode(cfg, m, gap_tol=gap_tol, workers=workers,
                              node_limit=node_limit, time_limit=time_limit)
        summaries.append(summary)
        by_mode[m] = summary
    flags: list[str] = []
    if 2 in by_mode:
        s2 = by_mode[2]
        if abs(s2.total_heat_cut_mwh) > 1e-9 or abs(s2.comfort_loss_cost) > 1e-9:
            flags.append("mode 2 is expected to cut nothing yet reports a nonzero cut")
    for other in (3, 4):
        if 5 in by_mode and other in by_mode:
            if by_mode[5].total_heat_cut_mwh < by_mode[other].total_heat_cut_mwh - 1e-9:
                flags.append(
                    f"trend inverted: mode 5 cuts less heat than mode {other} "
                    f"({by_mode[5].total_heat_cut_mwh:.3f} vs "
                    f"{by_mode[other].total_heat_cut_mwh:.3f} MWh)")
    if 5 in by_mode and 6 in by_mode:
        if by_mode[6].chp_heat_mwh < by_mode[5].chp_heat_mwh - 1e-9:
            flags.append(
                f"trend inverted: fixed-tariff run produces less combined-heat output "
                f"({by_mode[6].chp_heat_mwh:.3f} vs {by_mode[5].chp_heat_mwh:.3f} MWh)")
    return summaries, flags


# ---------------------------------------------------------------------------
# Residential-share sweep


@dataclass
class SensitivityRow:
    """One sweep point of the residential share of heated volume."""

    k: float
    summary: RunSummary
    cut_bound_mass: float  # total hourly cut ceiling, MWh equivalent


def _rescale_zones(cfg: ScenarioConfig, k: float) -> ScenarioConfig:
    total = cfg.volume_total or (cfg.zone_res.volume + cfg.zone_pub.volume)
    zr = cfg.zone_res
    zp = cfg.zone_pub
    v_res, v_pub = k * total, (1.0 - k) * total
    new_res = replace(zr, volume=v_res,
                      surface_area=surface_from_shape(zr.shape_coefficient, v_res))
    new_pub = replace(zp, volume=v_pub,
                      surface_area=surface_from_shape(zp.shape_coefficient, v_pub))
    t_neutral = temp_from_pmv(0.0, cfg.comfort)
    prof = cfg.profile
    h_res = np.array([
        heating_power_for_temp(t_neutral, t_neutral, to, new_res) for to in prof.t_out
    ])
    h_pub = np.array([
        heating_power_for_temp(t_neutral, t_neutral, to, new_pub) for to in prof.t_out
    ])
    new_prof = replace(prof, h_load_res=h_res, h_load_pub=h_pub)
    return replace(cfg, zone_res=new_res, zone_pub=new_pub, profile=new_prof,
                   volume_total=total, _validated=False)


def sensitivity_residential_fraction(
    cfg: ScenarioConfig,
    k_values: tuple[float, ...],
    mode: int = 5,
    gap_tol: float | None = None,
    workers: int = 1,
    node_limit: int = 20000,
    time_limit: float | None = None,
) -> list[SensitivityRow]:
    """Re-derive both zones at each residential share and rerun the game.

    Volumes split the fixed total; surfaces follow each zone's shape
    coefficient; base heat loads are recomputed at the neutral-vote
    setpoint so the whole physical chain responds to the share.
    """
    rows: list[SensitivityRow] = []
    for k in k_values:
        if not 0.0 < k < 1.0:
            raise ValueError(f"sensitivity: share {k} outside (0, 1)")
        cfg_k = _rescale_zones(cfg, k)
        sched, summary = run_mode(cfg_k, mode, gap_tol=gap_tol, workers=workers,
                                  node_limit=node_limit, time_limit=time_limit)
        prob = sched.problem
        mass = float(np.sum(prob.meta["x_max"]) + np.sum(prob.meta["y_max"])) * cfg.delta_t \
            if prob is not None else 0.0
        rows.append(SensitivityRow(k=k, summary=summary, cut_bound_mass=mass))
    return rows
