"""Branch-and-bound for convex MIQPs with complementarity switches.

Search rules: branch on the pair whose complementarity product (positive
slack times positive multiplier) is largest, falling back to the most
fractional switch when every product is clean; best-bound node selection
keyed on (bound, node id) so runs are reproducible.  Binary fixings are
applied by *eliminating* the fixed columns and rewriting the affected
big-M rows (switch at 0 turns the slack row into an equality or a pin;
switch at 1 removes the multiplier column), which keeps every node
relaxation a well-posed convex QP with a strict interior.  Nodes whose
relaxation never converges are not wasted: the Lagrangian box bound of
the best iterate still certifies them, and integral-feasible iterates
are salvaged as incumbents.

``workers`` pre-solves the two children of each branched node
concurrently; results are cached and only revealed when a node is popped,
so the explored tree, the incumbent and the bound are identical for any
worker count.
"""

from __future__ import annotations

import heapq
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import MIQPProblem
from .qp import _AS_SIZE_LIMIT, QuadraticProgram, solve_convex_qp

__all__ = ["MiqpResult", "solve_miqp", "enumerate_exhaustive"]


@dataclass
class MiqpResult:
    """Outcome of one MIQP search."""

    x: np.ndarray
    objective: float  # incumbent value, model constant included
    bound: float  # proven lower bound, model constant included
    gap: float  # (objective - bound) / max(1, |objective|)
    status: str  # optimal | gap-limit | node-limit | infeasible
    nodes: int
    log: list[str] = field(default_factory=list)


def _base_fixings(problem: MIQPProblem) -> dict[int, int]:
    """Fixings implied before any search: bound-pinned switches and
    zero-width pairs (a slack that cannot leave zero needs no switch)."""
    qp = problem.qp
    fix: dict[int, int] = {}
    for j in problem.binaries:
        if qp.lb[j] == qp.ub[j]:
            fix[j] = int(round(qp.lb[j]))
    for p in problem.pairs:
        if p.width <= 1e-12 and p.nu_col not in fix:
            fix[p.nu_col] = 0
    return fix


def _reduce(problem: MIQPProblem, fixings: dict[int, int]):
    """Node QP with the given switches fixed, or None when contradictory.

    Returns (qp_reduced, keep_cols, fixed_values) where
    ``x_full[keep_cols] = x_red`` and ``x_full[j] = fixed_values[j]``
    reconstructs a full vector.
    """
    qp = problem.qp
    n = qp.n
    pair_by_nu = {p.nu_col: p for p in problem.pairs}
    fixed_vals: dict[int, float] = {}
    drop_rows: set[int] = set()
    extra_eq: list[tuple[tuple[int, ...], tuple[float, ...], float]] = []
    for nu, val in fixings.items():
        p = pair_by_nu[nu]
        fixed_vals[nu] = float(val)
        if val == 0:
            drop_rows.add(p.slack_row)
            if len(p.slack_cols) == 1:
                # Zero slack pins the variable; pin it through its bounds so
                # the column is eliminated instead of leaving an equality
                # glued to a box face (which has no strict interior).
                col = p.slack_cols[0]
                pin = p.slack_rhs / p.slack_coefs[0]
                prev = fixed_vals.get(col)
                if prev is not None and abs(prev - pin) > 1e-9:
                    return None
                if not (qp.lb[col] - 1e-9 <= pin <= qp.ub[col] + 1e-9):
                    return None
                fixed_vals[col] = pin
            else:
                extra_eq.append((p.slack_cols, p.slack_coefs, p.slack_rhs))
        else:
            fixed_vals[p.lam_col] = 0.0
            drop_rows.add(p.mult_row)
            # slack <= width is already carried by the variable bounds;
            # keeping the row would duplicate a box face and degenerate
            # every vertex that touches it.
            drop_rows.add(p.slack_row)

    fixed_idx = np.array(sorted(fixed_vals), dtype=int)
    v = np.array([fixed_vals[j] for j in fixed_idx])
    keep = np.setdiff1d(np.arange(n), fixed_idx)

    Q = qp.Q
    c_r = qp.c[keep] + np.asarray(Q[keep][:, fixed_idx] @ v).ravel() if len(fixed_idx) else qp.c[keep]
    Q_r = Q[keep][:, keep]
    # Objective mass carried by the eliminated columns.
    const_fix = 0.0
    if len(fixed_idx):
        const_fix = float(qp.c[fixed_idx] @ v) + 0.5 * float(v @ (Q[fixed_idx][:, fixed_idx] @ v))

    A_rows = [qp.A]
    b_rows = [qp.b]
    if extra_eq:
        rr, cc, vv, rhs2 = [], [], [], []
        for k, (cols_, coefs_, rhs_) in enumerate(extra_eq):
            for cj, vj in zip(cols_, coefs_):
                rr.append(k)
                cc.append(cj)
                vv.append(vj)
            rhs2.append(rhs_)
        A_rows.append(sp.csr_matrix((vv, (rr, cc)), shape=(len(extra_eq), n)))
        b_rows.append(np.asarray(rhs2))
    A_full = sp.vstack(A_rows, format="csr") if len(A_rows) > 1 else qp.A
    b_full = np.concatenate(b_rows)
    b_r = b_full - np.asarray(A_full[:, fixed_idx] @ v).ravel() if len(fixed_idx) else b_full
    A_r = A_full[:, keep]

    keep_rows = np.setdiff1d(np.arange(qp.G.shape[0]), np.array(sorted(drop_rows), dtype=int))
    G_full = qp.G[keep_rows]
    h_r = qp.h[keep_rows] - np.asarray(G_full[:, fixed_idx] @ v).ravel() if len(fixed_idx) else qp.h[keep_rows]
    G_r = G_full[:, keep]

    # Contradiction / vacuous-row scan on rows whose variables vanished.
    ar = A_r.getnnz(axis=1)
    zero_eq = np.flatnonzero(ar == 0)
    if len(zero_eq) and np.max(np.abs(b_r[zero_eq]), initial=0.0) > 1e-9:
        return None
    if len(zero_eq):
        keep_eq = np.flatnonzero(ar > 0)
        A_r, b_r = A_r[keep_eq], b_r[keep_eq]
    gr = G_r.getnnz(axis=1)
    zero_in = np.flatnonzero(gr == 0)
    if len(zero_in):
        if np.min(h_r[zero_in], initial=0.0) < -1e-9:
            return None
        keep_in = np.flatnonzero(gr > 0)
        G_r, h_r = G_r[keep_in], h_r[keep_in]

    lb_r, ub_r = qp.lb[keep], qp.ub[keep]
    names_r = tuple(qp.names[i] for i in keep)
    qp_r = QuadraticProgram.build(Q_r, c_r, A_r, b_r, G_r, h_r, lb_r, ub_r, names_r)
    return qp_r, keep, fixed_vals, const_fix


def _embed(problem: MIQPProblem, keep: np.ndarray, fixed_vals: dict[int, float], x_r: np.ndarray) -> np.ndarray:
    x = np.zeros(problem.qp.n)
    x[keep] = x_r
    for j, v in fixed_vals.items():
        x[j] = v
    return x


def _solve_node(problem: MIQPProblem, fixings: dict[int, int], tol: float):
    red = _reduce(problem, fixings)
    if red is None:
        return ("infeasible", None, np.inf, np.inf)
    qp_r, keep, fixed_vals, const_fix = red
    sol = solve_convex_qp(qp_r, tol=tol)
    if sol.status == "max-iter":
        # An unconverged value is not a bound; try the other engine before
        # handing the node back as untrusted.  The dense fallback is only
        # worth it at sizes it can finish quickly.
        alt = "ipm" if sol.method == "active-set" else (
            "active-set" if qp_r.n <= _AS_SIZE_LIMIT else None)
        if alt is not None:
            retry = solve_convex_qp(qp_r, tol=tol, method=alt)
            if retry.status in ("optimal", "infeasible", "unbounded"):
                sol = retry
    if sol.status == "infeasible":
        return ("infeasible", None, np.inf, np.inf)
    if sol.status == "unbounded":
        raise ValueError("solve_miqp: node relaxation is unbounded; the model must bound all columns")
    x_full = _embed(problem, keep, fixed_vals, sol.x)
    obj = sol.objective + const_fix + problem.constant
    # The Lagrangian box bound certifies the node even when the iterate
    # never converged, so stalls cost tightness rather than soundness.
    db = sol.dual_bound + const_fix + problem.constant if np.isfinite(sol.dual_bound) else -np.inf
    return (sol.status, x_full, obj, db)


def _primal_feasible(qp: QuadraticProgram, x: np.ndarray, tol: float = 1e-7) -> bool:
    """Constraint check for an incumbent candidate, scale-relative."""
    scale = 1.0 + float(np.max(np.abs(x), initial=0.0))
    if qp.A.shape[0] and float(np.max(np.abs(qp.A @ x - qp.b))) > tol * (
        1.0 + float(np.abs(qp.b).max(initial=0.0))
    ):
        return False
    if qp.G.shape[0] and float(np.max(qp.G @ x - qp.h, initial=0.0)) > tol * (
        1.0 + float(np.abs(qp.h).max(initial=0.0))
    ):
        return False
    lo = np.where(np.isfinite(qp.lb), qp.lb - x, 0.0)
    hi = np.where(np.isfinite(qp.ub), x - qp.ub, 0.0)
    return float(np.max(lo, initial=0.0)) <= tol * scale and float(np.max(hi, initial=0.0)) <= tol * scale


def _comp_round(problem: MIQPProblem, x_full: np.ndarray, fixings: dict[int, int]) -> dict[int, int]:
    """Integral candidate: per pair keep the side with the larger room."""
    out = dict(fixings)
    for p in problem.pairs:
        if p.nu_col in out:
            continue
        slack = p.slack_rhs - sum(cf * x_full[cl] for cl, cf in zip(p.slack_cols, p.slack_coefs))
        out[p.nu_col] = 1 if slack > x_full[p.lam_col] else 0
    return out


def solve_miqp(
    problem: MIQPProblem,
    gap_tol: float = 1e-6,
    qp_tol: float = 1e-8,
    node_limit: int = 100000,
    time_limit: float | None = None,
    workers: int = 1,
    verbose: bool = False,
    int_tol: float = 1e-7,
) -> MiqpResult:
    """Best-bound branch-and-bound over the complementarity switches."""
    t0 = time.monotonic()
    base = _base_fixings(problem)
    pair_by_nu = {p.nu_col: p for p in problem.pairs}
    log: list[str] = []
    inc_obj = np.inf
    inc_x: np.ndarray | None = None
    nodes = 0
    next_id = 0
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def submit(fix):
        if pool is None:
            return None
        return pool.submit(_solve_node, problem, fix, qp_tol)

    # heap entries: (est_bound, node_id, fixings, future_or_none)
    heap: list = [(-np.inf, 0, base, None)]
    next_id = 1
    status = "optimal"

    def gap_of(bound):
        if inc_obj is np.inf or not np.isfinite(inc_obj):
            return np.inf
        return (inc_obj - bound) / max(1.0, abs(inc_obj))

    def try_incumbent(fix_all):
        nonlocal inc_obj, inc_x
        st, x_full, obj, _db = _solve_node(problem, fix_all, qp_tol)
        if x_full is None or obj >= inc_obj - 1e-12:
            return
        # A fully fixed node is integral by construction, so any point that
        # satisfies the continuous constraints is a genuine incumbent even
        # if the solver never certified optimality for it.
        if st == "optimal" or _primal_feasible(problem.qp, x_full):
            inc_obj, inc_x = obj, x_full

    global_bound = -np.inf
    dropped_bound = np.inf  # inherited bounds of nodes abandoned unconverged
    try:
        while heap:
            if nodes >= node_limit:
                status = "node-limit"
                break
            if time_limit is not None and time.monotonic() - t0 > time_limit:
                status = "gap-limit"
                break
            est, nid, fix, fut = heapq.heappop(heap)
            lowest = heap[0][0] if heap else np.inf
            global_bound = min(est, lowest) if np.isfinite(est) else lowest
            if inc_x is not None and est >= inc_obj - 1e-12:
                continue  # pruned by bound before solving
            res = fut.result() if fut is not None else _solve_node(problem, fix, qp_tol)
            nodes += 1
            st, x_full, obj, db = res
            if verbose:
                log.append(f"node {nid} depth {len(fix) - len(base)} bound {obj:.6f} status {st}")
            if st == "infeasible":
                continue
            # A converged relaxation value bounds the node; otherwise fall
            # back on the certified Lagrangian bound or the inherited one,
            # whichever is tighter.
            node_bound = obj if st == "optimal" else max(est, db)
            if inc_x is not None and node_bound >= inc_obj - 1e-12:
                continue
            free = [j for j in problem.binaries if j not in fix]
            frac = np.array([min(x_full[j], 1.0 - x_full[j]) for j in free]) if free else np.zeros(0)
            if st == "optimal" and len(frac) == 0:
                # Every switch already fixed: the node value is exact.
                if obj < inc_obj - 1e-12:
                    inc_obj, inc_x = obj, x_full
                continue
            if st == "optimal" and frac.max() <= int_tol:
                # Integral relaxation: pin every switch and resolve exactly
                # (the free big-M rows were relaxed, so the value was not).
                # If the pinned value does not meet the node bound the node
                # may still hide a better assignment, so let it branch.
                fix_all = dict(fix)
                for j in free:
                    fix_all[j] = int(round(x_full[j]))
                try_incumbent(fix_all)
                if inc_x is not None and node_bound >= inc_obj - 1e-12:
                    continue
            if st != "optimal" and len(frac) == 0:
                # Fully fixed yet unconverged by both engines: keep its best
                # certified bound, and salvage the point as an incumbent when
                # it is integral-feasible anyway.
                if x_full is not None and obj < inc_obj - 1e-12 and _primal_feasible(problem.qp, x_full):
                    inc_obj, inc_x = obj, x_full
                dropped_bound = min(dropped_bound, node_bound)
                continue
            if nodes == 1 or nodes % 50 == 0:
                try_incumbent(_comp_round(problem, x_full, fix))
                if inc_x is not None and node_bound >= inc_obj - 1e-12:
                    continue
            rem_bound = min(node_bound, heap[0][0]) if heap else node_bound
            if np.isfinite(rem_bound) and gap_of(rem_bound) <= gap_tol:
                global_bound = rem_bound
                heapq.heappush(heap, (node_bound, nid, fix, None))  # keep for bound accounting
                break
            # Branch where complementarity is violated hardest; the switch
            # fractionality alone says little because the big-M rows leave
            # nu cheap to move.  A stalled iterate still ranks pairs fine.
            scores = np.empty(len(free))
            for i, j in enumerate(free):
                p = pair_by_nu[j]
                slack = p.slack_rhs - sum(
                    cf * x_full[cl] for cl, cf in zip(p.slack_cols, p.slack_coefs)
                )
                scores[i] = max(slack, 0.0) * max(x_full[p.lam_col], 0.0)
            pick = int(np.argmax(scores))
            if scores[pick] <= 1e-10:
                pick = int(np.argmax(frac))
            k = free[pick]
            for val in (0, 1):
                child = dict(fix)
                child[k] = val
                heapq.heappush(heap, (node_bound, next_id, child, submit(child)))
                next_id += 1
    finally:
        if pool is not None:
            pool.shutdown(wait=False, cancel_futures=True)

    if heap and status == "optimal":
        global_bound = heap[0][0]
    if not heap:
        global_bound = inc_obj
    if np.isfinite(dropped_bound):
        global_bound = min(global_bound, dropped_bound)
    if inc_x is None:
        if status == "optimal":
            status = "infeasible"
        return MiqpResult(x=np.zeros(problem.qp.n), objective=np.inf, bound=global_bound,
                          gap=np.inf, status=status, nodes=nodes, log=log)
    bound = min(global_bound, inc_obj) if np.isfinite(global_bound) else inc_obj
    gap = max(0.0, (inc_obj - bound) / max(1.0, abs(inc_obj)))
    if status == "optimal" and gap > gap_tol:
        status = "gap-limit"
    return MiqpResult(x=inc_x, objective=inc_obj, bound=bound, gap=gap,
                      status=status, nodes=nodes, log=log)


def enumerate_exhaustive(problem: MIQPProblem, limit: int = 20, qp_tol: float = 1e-8) -> MiqpResult:
    """Ground-truth solve by trying every assignment of the free switches.

    Only the switches not already pinned by bounds or zero-width pairs are
    enumerated; refuses more than ``limit`` of them.
    """
    base = _base_fixings(problem)
    free = [j for j in problem.binaries if j not in base]
    if len(free) > limit:
        raise ValueError(f"enumerate_exhaustive: {len(free)} free switches exceed the limit {limit}")
    best_obj = np.inf
    best_x = None
    nodes = 0
    for mask in range(1 << len(free)):
        fix = dict(base)
        for i, j in enumerate(free):
            fix[j] = (mask >> i) & 1
        st, x_full, obj, _db = _solve_node(problem, fix, qp_tol)
        nodes += 1
        if st != "infeasible" and x_full is not None and obj < best_obj - 1e-12:
            best_obj, best_x = obj, x_full
    if best_x is None:
        return MiqpResult(x=np.zeros(problem.qp.n), objective=np.inf, bound=np.inf,
                          gap=np.inf, status="infeasible", nodes=nodes)
    return MiqpResult(x=best_x, objective=best_obj, bound=best_obj, gap=0.0,
                      status="optimal", nodes=nodes)
