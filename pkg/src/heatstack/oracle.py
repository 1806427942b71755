"""Closed-form customer response and independent equilibrium verification.

The customer problem separates per lever once prices are fixed: each heat
cut minimizes a one-dimensional quadratic (clip the unconstrained
stationary point into its box), and the load shift is a linear program
over a budget-coupled box, solved exactly by a greedy fill in ascending
tariff order.  Because none of this shares code with the KKT/big-M
pipeline, agreement between the two is real evidence rather than an
identity.

``equilibrium_check`` probes the game solution from both sides: the
customer side must reproduce its own best response, and no feasible
re-pricing (followed by the customer re-optimizing and the operator
re-dispatching) may beat the operator's achieved profit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import _model_data, build_dispatch_qp, build_lower_qp, objective_value_direct
from .datamodel import ScenarioConfig
from .qp import qp_objective, solve_convex_qp

__all__ = [
    "FollowerResponse",
    "OracleReport",
    "EquilibriumReport",
    "ExistenceReport",
    "follower_best_response",
    "greedy_shift",
    "project_to_mean",
    "verify_oracle_vs_numeric",
    "equilibrium_check",
    "existence_uniqueness_check",
]


@dataclass(frozen=True)
class FollowerResponse:
    """Customer levers at fixed prices plus the bill they imply."""

    shift: np.ndarray
    cut_res: np.ndarray
    cut_pub: np.ndarray
    objective: float  # response-dependent part of the customer cost
    bill: float  # full bill: objective + zero-response constant


def greedy_shift(kappa_e: np.ndarray, s_max: np.ndarray, budget: float) -> np.ndarray:
    """Exact minimizer of sum(kappa_e * s) over the budgeted shift box.

    Every hour starts at its floor; the remaining budget is poured into
    hours in ascending tariff order (ties to the earliest hour), filling
    each box before moving on.  This is the classic fractional-knapsack
    argument: any optimum can be permuted into this form without changing
    the objective.
    """
    kappa_e = np.asarray(kappa_e, dtype=float)
    s_max = np.asarray(s_max, dtype=float)
    total = float(s_max.sum())
    pour = budget + total  # distance from the all-floors corner
    if pour < -1e-9 or pour > 2.0 * total + 1e-9:
        raise ValueError(
            f"greedy_shift: budget {budget:g} outside the box-feasible range "
            f"[{-total:g}, {total:g}]"
        )
    s = -s_max.copy()
    remaining = min(max(pour, 0.0), 2.0 * total)
    for t in sorted(range(len(kappa_e)), key=lambda i: (kappa_e[i], i)):
        add = min(2.0 * s_max[t], remaining)
        s[t] += add
        remaining -= add
        if remaining <= 0.0:
            break
    return s


def follower_best_response(
    cfg: ScenarioConfig,
    kappa_e: np.ndarray,
    kappa_h: np.ndarray,
    mode: int = 5,
) -> FollowerResponse:
    """Analytic customer optimum at fixed prices.

    Cuts obey ``clip(tariff / (2 psi), 0, hourly bound)`` per zone; the
    shift is the greedy budget fill.  The returned ``objective`` is
    directly comparable with the numeric response QP's optimum.
    """
    md = _model_data(cfg, mode)
    kappa_e = np.asarray(kappa_e, dtype=float)
    kappa_h = np.asarray(kappa_h, dtype=float)
    if len(kappa_e) != md.T or len(kappa_h) != md.T:
        raise ValueError("follower_best_response: price vectors must match the horizon")
    interior = kappa_h / (2.0 * cfg.psi)
    cut_res = np.clip(interior, 0.0, md.x_max)
    cut_pub = np.clip(interior, 0.0, md.y_max)
    shift = greedy_shift(kappa_e, md.s_max, md.budget)
    obj = (
        float(kappa_e @ shift)
        - float(kappa_h @ (cut_res + cut_pub))
        + cfg.psi * float(cut_res @ cut_res + cut_pub @ cut_pub)
    )
    prof = cfg.profile
    base = float(kappa_e @ prof.p_load + kappa_h @ (prof.h_load_res + prof.h_load_pub))
    return FollowerResponse(shift=shift, cut_res=cut_res, cut_pub=cut_pub,
                            objective=obj, bill=obj + base)


def project_to_mean(values: np.ndarray, lo: float, hi: float, mean: float) -> np.ndarray:
    """Clip into [lo, hi] while restoring the prescribed mean.

    A bisection on the uniform offset: ``mean(clip(v + d, lo, hi))`` is
    continuous and nondecreasing in ``d``, so the target mean (which must
    lie inside [lo, hi]) is always attainable.  The leftover rounding
    residual is spread over strictly interior entries, making the mean
    equality hold to near machine precision.
    """
    v = np.asarray(values, dtype=float)
    if not lo <= mean <= hi:
        raise ValueError(f"project_to_mean: mean {mean:g} outside [{lo:g}, {hi:g}]")
    d_lo, d_hi = lo - hi, hi - lo
    for _ in range(200):
        d = 0.5 * (d_lo + d_hi)
        if float(np.mean(np.clip(v + d, lo, hi))) < mean:
            d_lo = d
        else:
            d_hi = d
    out = np.clip(v + 0.5 * (d_lo + d_hi), lo, hi)
    resid = mean - float(np.mean(out))
    interior = (out > lo + 1e-9) & (out < hi - 1e-9)
    if np.any(interior) and abs(resid) > 0.0:
        out[interior] += resid * len(out) / int(np.sum(interior))
        out = np.clip(out, lo, hi)
    return out


@dataclass
class OracleReport:
    """Cross-validation of the analytic response against the numeric QP."""

    trials: int
    passed: bool
    worst_objective_diff: float
    worst_primal_diff: float
    degenerate_trials: int
    failures: list[str] = field(default_factory=list)


def verify_oracle_vs_numeric(
    cfg: ScenarioConfig,
    n_trials: int = 100,
    seed: int = 0,
    tol: float = 1e-6,
    mode: int = 5,
) -> OracleReport:
    """Random feasible price vectors; analytic and numeric must agree.

    Objectives are compared on every trial.  Primal vectors are compared
    unless the drawn electricity tariff has equal entries, where the shift
    optimum is a face rather than a point and only the value is defined.
    """
    rng = np.random.default_rng(seed)
    pr = cfg.prices
    worst_obj = 0.0
    worst_primal = 0.0
    degen = 0
    failures: list[str] = []
    for k in range(n_trials):
        ke = project_to_mean(rng.uniform(pr.e_min, pr.e_max, cfg.horizon),
                             pr.e_min, pr.e_max, pr.e_mean)
        kh = project_to_mean(rng.uniform(pr.h_min, pr.h_max, cfg.horizon),
                             pr.h_min, pr.h_max, pr.h_mean)
        ana = follower_best_response(cfg, ke, kh, mode)
        qp = build_lower_qp(cfg, ke, kh, mode)
        sol = solve_convex_qp(qp, tol=1e-10)
        z_ana = np.concatenate([ana.shift, ana.cut_res, ana.cut_pub])
        d_obj = abs(qp_objective(qp, z_ana) - sol.objective)
        worst_obj = max(worst_obj, d_obj)
        degenerate = len(np.unique(ke)) < len(ke)
        if degenerate:
            degen += 1
            d_primal = 0.0
        else:
            d_primal = float(np.max(np.abs(z_ana - sol.x)))
            worst_primal = max(worst_primal, d_primal)
        if d_obj > tol or d_primal > tol or sol.status != "optimal":
            failures.append(
                f"trial {k}: objective diff {d_obj:.3e}, primal diff {d_primal:.3e}, "
                f"solver {sol.status}; kappa_e={np.array2string(ke, precision=6)}, "
                f"kappa_h={np.array2string(kh, precision=6)}"
            )
    return OracleReport(
        trials=n_trials,
        passed=not failures,
        worst_objective_diff=worst_obj,
        worst_primal_diff=worst_primal,
        degenerate_trials=degen,
        failures=failures,
    )


@dataclass
class EquilibriumReport:
    """Two-sided no-deviation probe of a solved game instance."""

    follower_matches: bool
    follower_objective_diff: float
    follower_primal_diff: float
    n_perturb: int
    worst_improvement: float  # perturbed profit minus baseline, most favorable
    baseline_profit: float
    passed: bool
    solver_status: str
    violations: list[str] = field(default_factory=list)


def _dispatch_profit(cfg: ScenarioConfig, ke, kh, resp: FollowerResponse,
                     mode: int, tol: float) -> float | None:
    """Operating profit with response frozen and generation re-optimized."""
    qp, idx, _const = build_dispatch_qp(cfg, resp.shift, resp.cut_res, resp.cut_pub, mode)
    sol = solve_convex_qp(qp, tol=tol)
    if sol.status != "optimal":
        return None
    acct = objective_value_direct(cfg, idx, sol.x, kappa_e=ke, kappa_h=kh,
                                  dr=(resp.shift, resp.cut_res, resp.cut_pub))
    return acct["profit"]


def equilibrium_check(
    cfg: ScenarioConfig,
    kappa_e: np.ndarray,
    kappa_h: np.ndarray,
    shift: np.ndarray,
    cut_res: np.ndarray,
    cut_pub: np.ndarray,
    n_perturb: int = 50,
    step: float = 1.0,
    seed: int = 0,
    tol: float = 1e-6,
    mode: int = 5,
    solver_status: str = "optimal",
) -> EquilibriumReport:
    """No profitable deviation for either player at the solved point.

    Customer side: the played levers must coincide with the analytic best
    response at the solved prices (value always, vectors when the tariff
    is non-degenerate).  Operator side: random in-box, mean-preserving
    price perturbations, each followed by the customer re-optimizing and
    the operator re-dispatching, must not beat the baseline profit by
    more than ``tol``.  A non-optimal ``solver_status`` is recorded so a
    gap-limited incumbent failing the leader side is distinguishable from
    a genuine equilibrium violation.
    """
    kappa_e = np.asarray(kappa_e, dtype=float)
    kappa_h = np.asarray(kappa_h, dtype=float)
    pr = cfg.prices
    br = follower_best_response(cfg, kappa_e, kappa_h, mode)
    played = np.concatenate([np.asarray(shift, float), np.asarray(cut_res, float),
                             np.asarray(cut_pub, float)])
    qp_low = build_lower_qp(cfg, kappa_e, kappa_h, mode)
    f_played = qp_objective(qp_low, played)
    f_best = qp_objective(qp_low, np.concatenate([br.shift, br.cut_res, br.cut_pub]))
    f_diff = abs(f_played - f_best)
    degenerate = len(np.unique(kappa_e)) < len(kappa_e)
    p_diff = 0.0 if degenerate else float(np.max(np.abs(
        played - np.concatenate([br.shift, br.cut_res, br.cut_pub]))))
    follower_ok = f_diff <= tol and p_diff <= 10 * tol

    violations: list[str] = []
    base_profit = _dispatch_profit(cfg, kappa_e, kappa_h, br, mode, cfg.qp_tol)
    worst = -np.inf
    rng = np.random.default_rng(seed)
    if base_profit is None:
        violations.append("baseline dispatch did not converge")
    else:
        for k in range(n_perturb):
            ke = project_to_mean(kappa_e + step * rng.uniform(-1.0, 1.0, len(kappa_e)),
                                 pr.e_min, pr.e_max, pr.e_mean)
            kh = project_to_mean(kappa_h + step * rng.uniform(-1.0, 1.0, len(kappa_h)),
                                 pr.h_min, pr.h_max, pr.h_mean)
            resp = follower_best_response(cfg, ke, kh, mode)
            profit = _dispatch_profit(cfg, ke, kh, resp, mode, cfg.qp_tol)
            if profit is None:
                violations.append(f"perturbation {k}: dispatch did not converge")
                continue
            gain = profit - base_profit
            worst = max(worst, gain)
            if gain > tol:
                violations.append(
                    f"perturbation {k}: profit improves by {gain:.6e}; "
                    f"kappa_e={np.array2string(ke, precision=6)}, "
                    f"kappa_h={np.array2string(kh, precision=6)}"
                )
    passed = follower_ok and not violations
    return EquilibriumReport(
        follower_matches=follower_ok,
        follower_objective_diff=f_diff,
        follower_primal_diff=p_diff,
        n_perturb=n_perturb,
        worst_improvement=worst if np.isfinite(worst) else 0.0,
        baseline_profit=base_profit if base_profit is not None else np.nan,
        passed=passed,
        solver_status=solver_status,
        violations=violations,
    )


@dataclass
class ExistenceReport:
    """Structural conditions under which the game is well posed."""

    follower_convex: bool  # quadratic penalty strictly convex
    shift_monotonic: bool  # tariff floor positive, so shifting has a sign
    loads_positive: bool  # operator revenue strictly increasing in prices
    details: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.follower_convex and self.shift_monotonic and self.loads_positive


def existence_uniqueness_check(cfg: ScenarioConfig) -> ExistenceReport:
    """Report-only checks; never raises."""
    details: list[str] = []
    convex = cfg.psi > 0
    details.append(f"{'pass' if convex else 'FAIL'}: comfort penalty weight "
                   f"{cfg.psi:g} {'>' if convex else 'not >'} 0 (strictly convex response)")
    mono = cfg.prices.e_min > 0
    details.append(f"{'pass' if mono else 'FAIL'}: electricity tariff floor "
                   f"{cfg.prices.e_min:g} {'>' if mono else 'not >'} 0 (shift cost has a sign)")
    prof = cfg.profile
    heat = prof.h_load_res + prof.h_load_pub
    loads = bool(np.all(prof.p_load > 0) and np.all(heat > 0))
    if loads:
        details.append("pass: every hour carries positive electric and heat load "
                       "(revenue strictly increasing in prices)")
    else:
        bad = np.flatnonzero((prof.p_load <= 0) | (heat <= 0))
        details.append(f"FAIL: nonpositive load at hours {bad.tolist()}")
    return ExistenceReport(follower_convex=convex, shift_monotonic=mono,
                           loads_positive=loads, details=details)
