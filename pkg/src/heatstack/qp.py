"""In-house convex quadratic programming engine.

Solves  min 0.5 x'Qx + c'x  s.t.  A x = b,  G x <= h,  lb <= x <= ub
with PSD Q, returning primal and dual vectors plus KKT residuals.

Two interchangeable methods sit behind :func:`solve_convex_qp`:

* ``active-set`` - textbook primal active-set with a dense equality-KKT
  solve per iteration and an elastic phase-1.  Terminates on the exact
  optimum face, which gives machine-precision objectives; used for small
  problems (follower solves, enumeration oracles, unit tests).
* ``ipm`` - sparse Mehrotra predictor-corrector followed by an active-set
  identification polish, used for the large assembled models where dense
  iteration would be too slow.

Both are deterministic: ties break by smallest index everywhere and no
randomness is used.  Finite variable bounds are canonicalized into
inequality rows (order: user rows, then upper bounds, then lower bounds,
each by ascending variable index), so multipliers and residuals always
refer to the canonical row list returned by :func:`canonical_form`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import nnls
from scipy.sparse.linalg import splu

__all__ = [
    "QuadraticProgram",
    "QpSolution",
    "canonical_form",
    "solve_convex_qp",
    "kkt_residuals",
    "verify_psd",
    "qp_objective",
]

_AS_SIZE_LIMIT = 120  # largest variable count routed to the dense method by "auto"


def _csr(m, shape=None) -> sp.csr_matrix:
    if m is None:
        return sp.csr_matrix(shape)
    if sp.issparse(m):
        return m.tocsr().astype(float)
    arr = np.atleast_2d(np.asarray(m, dtype=float))
    return sp.csr_matrix(arr)


@dataclass(frozen=True)
class QuadraticProgram:
    """Standard-form convex QP with named variables.

    ``Q`` must be symmetric PSD.  ``A x = b`` are equalities, ``G x <= h``
    inequalities, and ``lb``/``ub`` elementwise bounds (+-inf allowed).
    """

    Q: sp.csr_matrix
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    names: tuple[str, ...]

    @classmethod
    def build(cls, Q, c, A=None, b=None, G=None, h=None, lb=None, ub=None, names=None) -> "QuadraticProgram":
        c = np.asarray(c, dtype=float).ravel()
        n = len(c)
        Q = _csr(Q, (n, n))
        A = _csr(A, (0, n))
        G = _csr(G, (0, n))
        b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
        h = np.zeros(0) if h is None else np.asarray(h, dtype=float).ravel()
        lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float).ravel()
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float).ravel()
        if names is None:
            names = tuple(f"x{i}" for i in range(n))
        qp = cls(Q=Q, c=c, A=A, b=b, G=G, h=h, lb=lb, ub=ub, names=tuple(names))
        qp.check_dims()
        return qp

    @property
    def n(self) -> int:
        return len(self.c)

    def check_dims(self) -> None:
        n = self.n
        ok = (
            self.Q.shape == (n, n)
            and self.A.shape[1] == n
            and self.G.shape[1] == n
            and self.A.shape[0] == len(self.b)
            and self.G.shape[0] == len(self.h)
            and len(self.lb) == n
            and len(self.ub) == n
            and len(self.names) == n
        )
        if not ok:
            raise ValueError("QuadraticProgram: inconsistent dimensions")
        if np.any(self.lb > self.ub + 1e-12):
            bad = int(np.argmax(self.lb - self.ub))
            raise ValueError(f"QuadraticProgram: empty bound box on {self.names[bad]!r}")


def qp_objective(qp: QuadraticProgram, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ (qp.Q @ x) + qp.c @ x)


def verify_psd(qp: QuadraticProgram, shift: float = 1e-9) -> bool:
    """Check PSD-ness of Q by attempting a Cholesky factorization.

    A relative diagonal shift absorbs roundoff; raises ``ValueError`` on
    genuine indefiniteness.
    """
    Qd = qp.Q.toarray()
    if not np.allclose(Qd, Qd.T, atol=1e-10):
        raise ValueError("QuadraticProgram: Q is not symmetric")
    scale = max(1.0, float(np.abs(Qd).max()) if Qd.size else 1.0)
    try:
        np.linalg.cholesky(Qd + shift * scale * np.eye(qp.n))
    except np.linalg.LinAlgError as exc:
        raise ValueError("QuadraticProgram: Q is not positive semidefinite") from exc
    return True


def canonical_form(qp: QuadraticProgram) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray, np.ndarray]:
    """Inequalities with finite bounds folded in as rows.

    Returns ``(G_ext, h_ext, ub_rows, lb_rows)`` where the extra rows are
    ``x_i <= ub_i`` for finite uppers then ``-x_i <= -lb_i`` for finite
    lowers, each in ascending variable order.  ``ub_rows``/``lb_rows``
    give the variable indices in row order.
    """
    n = qp.n
    ub_idx = np.flatnonzero(np.isfinite(qp.ub))
    lb_idx = np.flatnonzero(np.isfinite(qp.lb))
    blocks = [qp.G]
    if len(ub_idx):
        blocks.append(sp.csr_matrix((np.ones(len(ub_idx)), (np.arange(len(ub_idx)), ub_idx)), shape=(len(ub_idx), n)))
    if len(lb_idx):
        blocks.append(sp.csr_matrix((-np.ones(len(lb_idx)), (np.arange(len(lb_idx)), lb_idx)), shape=(len(lb_idx), n)))
    G_ext = sp.vstack(blocks, format="csr") if len(blocks) > 1 else qp.G
    h_ext = np.concatenate([qp.h, qp.ub[ub_idx], -qp.lb[lb_idx]])
    return G_ext, h_ext, ub_idx, lb_idx


@dataclass
class QpSolution:
    """Primal/dual output of one QP solve."""

    x: np.ndarray
    eq_mult: np.ndarray
    ineq_mult: np.ndarray  # canonical rows: G, then finite ub, then finite lb
    status: str  # optimal | infeasible | unbounded | max-iter
    objective: float
    dual_bound: float
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0
    method: str = ""
    active_set: tuple[int, ...] = ()


def kkt_residuals(qp: QuadraticProgram, sol: QpSolution) -> dict[str, float]:
    """Four KKT residual norms of a candidate solution, canonical-form rows.

    stationarity = inf-norm of Qx + c + A'mu + G'lambda; primal = worst
    constraint violation; dual = worst negative multiplier; complementarity
    = max |lambda_i * slack_i|.
    """
    G_ext, h_ext, _, _ = canonical_form(qp)
    x, lam = sol.x, sol.ineq_mult
    stat = qp.Q @ x + qp.c
    if qp.A.shape[0]:
        stat = stat + qp.A.T @ sol.eq_mult
    if G_ext.shape[0]:
        stat = stat + G_ext.T @ lam
    slack = h_ext - G_ext @ x if G_ext.shape[0] else np.zeros(0)
    primal = 0.0
    if qp.A.shape[0]:
        primal = float(np.max(np.abs(qp.A @ x - qp.b)))
    if len(slack)\
            and -float(slack.min()) > primal:
        primal = -float(slack.min())
    return {
        "stationarity": float(np.max(np.abs(stat))) if len(stat) else 0.0,
        "primal": max(primal, 0.0),
        "dual": float(max(0.0, -(lam.min() if len(lam) else 0.0))),
        "complementarity": float(np.max(np.abs(lam * slack))) if len(slack) else 0.0,
    }


def _lagrangian_bound(qp: QuadraticProgram, G_ext, h_ext, x, mu, lam) -> float:
    """Certified lower bound on the optimal value from any dual guess.

    For any multipliers ``lam >= 0`` and ``mu``, minimizing the Lagrangian
    over the variable boxes alone under-estimates the constrained optimum:

        min f  >=  f(x) + mu'(Ax-b) - lam'(h-Gx)
                   + sum_i min(r_i (lb_i - x_i), r_i (ub_i - x_i))

    with ``r = Qx + c + A'mu + G'lam`` (the quadratic remainder is dropped,
    which only lowers the value since Q is PSD).  The expansion point does
    not need to be feasible or converged, so stalled interior-point
    iterates still yield a usable branch-and-bound certificate.
    """
    lam = np.clip(lam, 0.0, None)
    obj = qp_objective(qp, x)
    val = obj
    if qp.A.shape[0]:
        val += float(mu @ (qp.A @ x - qp.b))
    if G_ext.shape[0]:
        val -= float(lam @ (h_ext - G_ext @ x))
    r = qp.Q @ x + qp.c
    if qp.A.shape[0]:
        r = r + qp.A.T @ mu
    if G_ext.shape[0]:
        r = r + G_ext.T @ lam
    lo_gap = qp.lb - x
    hi_gap = qp.ub - x
    with np.errstate(invalid="ignore"):
        term = np.where(r > 0, r * lo_gap, np.where(r < 0, r * hi_gap, 0.0))
    val += float(np.sum(term))
    return val if np.isfinite(val) else -np.inf


def _finish(qp: QuadraticProgram, x, mu, lam, status, iters, method, tol, active=()) -> QpSolution:
    G_ext, h_ext, _, _ = canonical_form(qp)
    slack = h_ext - G_ext @ x if G_ext.shape[0] else np.zeros(0)
    obj = qp_objective(qp, x)
    dual_bound = _lagrangian_bound(qp, G_ext, h_ext, x, mu, lam)
    sol = QpSolution(
        x=np.asarray(x, float),
        eq_mult=np.asarray(mu, float),
        ineq_mult=np.asarray(lam, float),
        status=status,
        objective=obj,
        dual_bound=dual_bound,
        iterations=iters,
        method=method,
        active_set=tuple(int(i) for i in active),
    )
    sol.residuals = kkt_residuals(qp, sol)
    if status == "optimal":
        scale = 1.0 + max(abs(obj), float(np.max(np.abs(x), initial=0.0)))
        worst = max(sol.residuals.values())
        if worst > max(tol * 100.0, 1e-6 * scale):
            sol.status = "max-iter"
    return sol


# ---------------------------------------------------------------------------
# Dense primal active-set method


class _DenseAS:
    """Primal active-set on the canonicalized dense problem."""

    def __init__(self, Q, c, A, b, G, h, tol):
        self.Q, self.c, self.A, self.b, self.G, self.h = Q, c, A, b, G, h
        self.n = len(c)
        self.me, self.mi = A.shape[0], G.shape[0]
        self.tol = tol
        self.feas_tol = max(tol, 1e-9)
        self.final_duals: tuple[np.ndarray, np.ndarray] | None = None

    def _step_direction(self, x, W):
        """Solve the equality-constrained subproblem on working set W.

        Returns (p, ray) where exactly one is non-None: p is the Newton
        step within the active face, ray an unbounded descent direction.
        """
        C = np.vstack([self.A, self.G[W]]) if (self.me or len(W)) else np.zeros((0, self.n))
        g = self.Q @ x + self.c
        if C.shape[0]:
            # Null-space basis via QR of C'.
            qfull, rfull = np.linalg.qr(C.T, mode="complete")
            rank = int(np.sum(np.abs(np.diag(rfull[: min(C.shape), :])) > 1e-11 * max(1.0, np.abs(rfull).max())))
            Z = qfull[:, rank:]
        else:
            Z = np.eye(self.n)
        if Z.shape[1] == 0:
            return np.zeros(self.n), None
        H = Z.T @ self.Q @ Z
        gz = Z.T @ g
        scale = max(1.0, np.abs(H).max())
        try:
            L = np.linalg.cholesky(H + 1e-12 * scale * np.eye(H.shape[0]))
            pz = -np.linalg.solve(L.T, np.linalg.solve(L, gz))
            p = Z @ pz
            if H.shape[0] and float(pz @ (H @ pz)) < -1e-9 * scale:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            p = None
        if p is not None and np.all(np.isfinite(p)):
            # Guard against a numerically singular H producing garbage.
            if float(np.linalg.norm(H @ (Z.T @ p) + gz)) <= 1e-6 * (1.0 + float(np.linalg.norm(gz))):
                return p, None
        # Singular reduced Hessian: move along a zero-curvature descent ray.
        w, V = np.linalg.eigh(H)
        null = V[:, w < 1e-10 * max(1.0, w.max(initial=1.0))]
        if null.shape[1]:
            proj = null @ (null.T @ gz)
            if np.linalg.norm(proj) > 1e-10 * (1.0 + np.linalg.norm(gz)):
                return None, -(Z @ proj)
        # Descent confined to the positive-curvature subspace: pseudo-solve.
        pos = w > 1e-10 * max(1.0, w.max(initial=1.0))
        pz = -(V[:, pos] @ ((V[:, pos].T @ gz) / w[pos]))
        return Z @ pz, None

    def _multipliers(self, x, W):
        C = np.vstack([self.A, self.G[W]]) if (self.me or len(W)) else np.zeros((0, self.n))
        g = self.Q @ x + self.c
        if not C.shape[0]:
            return np.zeros(0), np.zeros(0)
        y, *_ = np.linalg.lstsq(C.T, -g, rcond=None)
        return y[: self.me], y[self.me :]

    def _signed_multipliers(self, x, W):
        """Sign-constrained multiplier search at a degenerate vertex.

        With dependent rows in the working set the least-squares
        multipliers are one arbitrary member of an affine family, and a
        negative entry there says nothing.  Decide optimality properly:
        project the gradient off the equality row space and ask the
        nonnegative least-squares subproblem whether some lamW >= 0
        absorbs the rest.  Returns (mu, lamW, stationarity_residual).
        """
        g = self.Q @ x + self.c
        scale = 1.0 + float(np.abs(g).max(initial=0.0))
        if self.me:
            qa, _ = np.linalg.qr(self.A.T, mode="reduced")
            proj = lambda v: v - qa @ (qa.T @ v)  # noqa: E731
        else:
            proj = lambda v: v  # noqa: E731
        if len(W):
            M = proj(self.G[W].T)
            lamW, _ = nnls(M, -proj(g))
            resid = float(np.abs(proj(g + self.G[W].T @ lamW)).max(initial=0.0))
        else:
            lamW = np.zeros(0)
            resid = float(np.abs(proj(g)).max(initial=0.0))
        if self.me:
            rhs = -(g + (self.G[W].T @ lamW if len(W) else 0.0))
            mu, *_ = np.linalg.lstsq(self.A.T, rhs, rcond=None)
        else:
            mu = np.zeros(0)
        return mu, lamW, resid / scale

    def run(self, x0, W0, max_iter):
        x = x0.copy()
        W: list[int] = list(W0)
        stalled = 0  # consecutive zero-length steps; degeneracy indicator
        for it in range(max_iter):
            if stalled > 150:
                # Hopelessly degenerate; stop burning cubic-cost iterations
                # and let the caller try the interior-point route.
                return x, W, "max-iter", it
            held = frozenset(W)
            p, ray = self._step_direction(x, W)
            if ray is not None:
                alpha, blocker = self._blocking(x, ray, held)
                if blocker is None:
                    return x, W, "unbounded", it
                x = x + alpha * ray
                self._add(W, blocker)
                continue
            if np.max(np.abs(p), initial=0.0) <= self.tol * (1.0 + np.max(np.abs(x), initial=0.0)):
                mu, lamW = self._multipliers(x, W)
                if len(lamW) == 0 or lamW.min() >= -max(self.tol * 100, 1e-9):
                    return x, W, "optimal", it
                mu2, lam2, resid = self._signed_multipliers(x, W)
                if resid <= max(self.tol * 100, 1e-9):
                    self.final_duals = (mu2, lam2)
                    return x, W, "optimal", it
                thresh = -max(self.tol * 100, 1e-9)
                if stalled > 30:
                    # Degenerate vertex: Bland's rule (first eligible row)
                    # breaks the drop/re-add cycle the greedy choice feeds.
                    drop = min((k for k in range(len(lamW)) if lamW[k] < thresh),
                               key=lambda k: W[k])
                else:
                    # Drop the most negative multiplier, smallest index on ties.
                    worst = lamW.min()
                    cand = [k for k in range(len(lamW)) if lamW[k] <= worst + 1e-12 * (1 + abs(worst))]
                    drop = min(cand, key=lambda k: W[k])
                W.pop(drop)
                stalled += 1
                continue
            alpha, blocker = self._blocking(x, p, held)
            step = min(1.0, alpha)
            x = x + step * p
            stalled = stalled + 1 if step <= 1e-13 else 0
            if blocker is not None and alpha < 1.0 - 1e-12:
                self._add(W, blocker)
        return x, W, "max-iter", max_iter

    def _add(self, W, row):
        if row not in W:
            W.append(row)
            W.sort()

    def _blocking(self, x, p, held=frozenset()):
        """Largest feasible step along p and the first blocking row.

        Rows in ``held`` (the working set) are pinned by the step
        direction itself; their directional derivative is pure float
        noise, which must not masquerade as a zero-length block.
        """
        alpha, blocker = np.inf, None
        Gp = self.G @ p if self.mi else np.zeros(0)
        slack = self.h - self.G @ x if self.mi else np.zeros(0)
        for i in range(self.mi):
            if i in held:
                continue
            if Gp[i] > 1e-12 * (1.0 + abs(self.h[i])):
                a = max(slack[i], 0.0) / Gp[i]
                if a < alpha - 1e-12 * (1.0 + alpha if np.isfinite(alpha) else 1.0):
                    alpha, blocker = a, i
        return alpha, blocker


def _active_set_solve(qp: QuadraticProgram, tol: float, max_iter: int | None) -> QpSolution:
    G_ext, h_ext, _, _ = canonical_form(qp)
    Qd, Ad, Gd = qp.Q.toarray(), qp.A.toarray(), G_ext.toarray()
    n, me, mi = qp.n, Ad.shape[0], Gd.shape[0]
    limit = max_iter or (50 * (n + mi) + 200)

    # Phase 1: least-squares start, falling back to the elastic LP (solved
    # by the interior-point core, which is far faster here than pivoting).
    x_init = np.zeros(n)
    if me:
        x_init, *_ = np.linalg.lstsq(Ad, qp.b, rcond=None)
    x_init = np.minimum(np.maximum(x_init, qp.lb), qp.ub)
    scale = 1.0 + float(np.abs(qp.b).max(initial=0.0)) + float(np.abs(h_ext).max(initial=0.0))
    viol = max(
        float(np.max(Gd @ x_init - h_ext, initial=0.0)) if mi else 0.0,
        float(np.max(np.abs(Ad @ x_init - qp.b), initial=0.0)) if me else 0.0,
    )
    if viol > 1e-11 * scale:
        infeas, x_lp = _feasibility_lp(qp, tol)
        if infeas > 1e-7 * scale:
            return _finish(qp, x_lp, np.zeros(me), np.zeros(mi), "infeasible", 0, "active-set", tol)
        x0 = x_lp
    else:
        x0 = x_init

    # Phase 2 from the feasible point; start with an independent active set.
    slack = h_ext - Gd @ x0 if mi else np.zeros(0)
    W0: list[int] = []
    base = Ad.copy() if me else np.zeros((0, n))
    for i in np.flatnonzero(slack <= 1e-9):
        trial = np.vstack([base, Gd[W0 + [int(i)]]])
        if np.linalg.matrix_rank(trial) == trial.shape[0]:
            W0.append(int(i))
    core = _DenseAS(Qd, qp.c, Ad, qp.b, Gd, h_ext, tol)
    x, W, status, iters = core.run(x0, W0, limit)
    if status == "unbounded":
        return _finish(qp, x, np.zeros(me), np.zeros(mi), "unbounded", iters, "active-set", tol)
    if core.final_duals is not None:
        mu, lamW = core.final_duals
    else:
        mu, lamW = core._multipliers(x, W)
    lam = np.zeros(mi)
    for k, row in enumerate(W):
        lam[row] = max(lamW[k], 0.0)
    return _finish(qp, x, mu, lam, status, iters, "active-set", tol, active=W)


def _solve_with_pinned(qp: QuadraticProgram, pinned: np.ndarray, tol: float,
                       max_iter: int | None, method: str) -> QpSolution:
    """Eliminate variables pinned by lb == ub, solve, re-embed duals."""
    n = qp.n
    free = np.setdiff1d(np.arange(n), pinned)
    v = np.zeros(n)
    v[pinned] = qp.lb[pinned]
    Q = qp.Q.tocsr()
    me, mG = qp.A.shape[0], qp.G.shape[0]
    if len(free) == 0:
        ok = (not me or np.max(np.abs(qp.A @ v - qp.b)) <= 1e-9) and (
            not mG or np.max(qp.G @ v - qp.h, initial=0.0) <= 1e-9
        )
        sub = QpSolution(x=np.zeros(0), eq_mult=np.zeros(me), ineq_mult=np.zeros(0),
                         status="optimal" if ok else "infeasible", objective=0.0, dual_bound=0.0)
        red = None
    else:
        red = QuadraticProgram.build(
            Q[free][:, free],
            qp.c[free] + Q[free][:, pinned] @ v[pinned],
            qp.A[:, free] if me else None,
            qp.b - qp.A[:, pinned] @ v[pinned] if me else None,
            qp.G[:, free] if mG else None,
            qp.h - qp.G[:, pinned] @ v[pinned] if mG else None,
            qp.lb[free],
            qp.ub[free],
            tuple(qp.names[i] for i in free),
        )
        sub = _dispatch(red, tol, max_iter, method)
    x = v.copy()
    x[free] = sub.x
    _, _, ub_idx, lb_idx = canonical_form(qp)
    if sub.status in ("infeasible", "unbounded"):
        return _finish(qp, x, np.zeros(me), np.zeros(mG + len(ub_idx) + len(lb_idx)),
                       sub.status, sub.iterations, method, tol)
    # Scatter reduced inequality multipliers into the full canonical order.
    lam = np.zeros(mG + len(ub_idx) + len(lb_idx))
    lam[:mG] = sub.ineq_mult[:mG] if red is not None else 0.0
    ub_pos = {int(j): k for k, j in enumerate(ub_idx)}
    lb_pos = {int(j): k for k, j in enumerate(lb_idx)}
    if red is not None:
        _, _, ub_idx_r, lb_idx_r = canonical_form(red)
        for k_r, j_r in enumerate(ub_idx_r):
            lam[mG + ub_pos[int(free[j_r])]] = sub.ineq_mult[mG + k_r]
        off_r = mG + len(ub_idx_r)
        for k_r, j_r in enumerate(lb_idx_r):
            lam[mG + len(ub_idx) + lb_pos[int(free[j_r])]] = sub.ineq_mult[off_r + k_r]
    # Pinned variables: split the stationarity residual between their
    # upper/lower bound rows so full-problem KKT closes exactly.
    grad = Q @ x + qp.c
    if me:
        grad = grad + qp.A.T @ sub.eq_mult
    if mG:
        grad = grad + qp.G.T @ lam[:mG]
    for j in pinned:
        r = grad[j]
        if r < 0:
            lam[mG + ub_pos[int(j)]] = -r
        else:
            lam[mG + len(ub_idx) + lb_pos[int(j)]] = r
    return _finish(qp, x, sub.eq_mult, lam, sub.status, sub.iterations, method, tol)


# ---------------------------------------------------------------------------
# Sparse interior-point method with polish


def _ipm_core(Q, c, A, b, G, h, tol, max_iter):
    """Mehrotra predictor-corrector on the canonical sparse problem."""
    n, me, mi = len(c), A.shape[0], G.shape[0]
    if mi == 0:
        # Pure equality QP: one KKT solve.
        K = sp.bmat([[Q, A.T], [A, None]], format="csc") if me else Q.tocsc()
        rhs = np.concatenate([-c, b]) if me else -c
        reg = sp.diags(np.r_[np.full(n, 1e-11), np.full(me, -1e-11)]) if me else sp.diags(np.full(n, 1e-11))
        sol = splu((K + reg).tocsc()).solve(rhs)
        return sol[:n], sol[n:], np.zeros(0), np.zeros(0), "optimal", 1

    x = np.zeros(n)
    y = np.zeros(me)
    slack0 = h - G @ x
    w = np.where(slack0 > 1.0, slack0, 1.0)
    lam = np.ones(mi)
    scale = 1.0 + max(np.abs(c).max(initial=0.0), np.abs(h).max(initial=0.0), np.abs(b).max(initial=0.0))
    best = None
    status = "max-iter"
    it = 0
    err = np.errstate(over="ignore", divide="ignore", invalid="ignore")
    err.__enter__()
    for it in range(1, max_iter + 1):
        r_d = Q @ x + c + (A.T @ y if me else 0) + G.T @ lam
        r_p = (A @ x - b) if me else np.zeros(0)
        r_g = G @ x + w - h
        mu = float(w @ lam) / mi
        res = max(
            np.max(np.abs(r_d)) / scale,
            np.max(np.abs(r_p), initial=0.0) / scale,
            np.max(np.abs(r_g)) / scale,
        )
        if best is None or res + mu / scale < best[0]:
            best = (res + mu / scale, x.copy(), y.copy(), lam.copy(), w.copy())
            since_best = 0
        else:
            since_best = since_best + 1
            if since_best >= 25:
                # Degenerate vertices can pin the barrier path; further
                # centering steps only burn time without progress.
                status = "max-iter"
                break
        if res <= tol and mu <= max(tol * scale * 1e-2, 1e-12 * scale):
            status = "optimal"
            break
        if not np.all(np.isfinite(x)) or np.abs(x).max() > 1e14:
            status = "diverged"
            break

        d = lam / w
        QB = (Q + G.T @ sp.diags(d) @ G).tocsc()
        if me:
            K = sp.bmat([[QB + sp.diags(np.full(n, 1e-11 * scale)), A.T], [A, sp.diags(np.full(me, -1e-11 * scale))]], format="csc")
        else:
            K = (QB + sp.diags(np.full(n, 1e-11 * scale))).tocsc()
        try:
            lu = splu(K)
        except RuntimeError:
            status = "factor-fail"
            break

        def newton(sigma_mu, comp_extra):
            rc = w * lam - sigma_mu + comp_extra
            rhs_x = -(r_d + G.T @ ((-rc / w) + d * r_g))
            rhs = np.concatenate([rhs_x, -r_p]) if me else rhs_x
            sol = lu.solve(rhs)
            dx = sol[:n]
            dy = sol[n:] if me else np.zeros(0)
            dw = -(r_g + G @ dx)
            dlam = -(rc + lam * dw) / w
            return dx, dy, dw, dlam

        # Predictor.
        dx, dy, dw, dlam = newton(0.0, 0.0)
        ap = _max_step(w, dw)
        ad = _max_step(lam, dlam)
        mu_aff = float((w + ap * dw) @ (lam + ad * dlam)) / mi
        sigma = (max(mu_aff, 0.0) / max(mu, 1e-300)) ** 3
        # Corrector.
        dx, dy, dw, dlam = newton(sigma * mu, dw * dlam)
        ap = min(1.0, 0.995 * _max_step(w, dw))
        ad = min(1.0, 0.995 * _max_step(lam, dlam))
        x = x + ap * dx
        w = w + ap * dw
        y = y + ad * dy
        lam = lam + ad * dlam
    else:
        status = "max-iter"
    err.__exit__(None, None, None)
    if status in ("max-iter", "diverged", "factor-fail") and best is not None:
        _, x, y, lam, w = best
    return x, y, lam, w, status, it


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _polish(qp, G_ext, h_ext, x, y, lam, w, tol):
    """Resolve the equality KKT system on the guessed active set.

    Rows are equilibrated first: big-M rows carry coefficients a thousand
    times larger than the stationarity rows, and an unscaled saddle system
    at that spread overwhelms the regularization, producing garbage
    multipliers.  Rows with negative multipliers are released and rows the
    trial point violates are activated.  Activating a row that is linearly
    dependent on the current face makes the saddle system singular and the
    multipliers explode; such a step is undone and the loop switches to
    cautious mode: one smallest-index change per round (the pivoting rule
    that cannot cycle), banning any row whose activation blows up again.
    """
    n, me = qp.n, qp.A.shape[0]
    mi = G_ext.shape[0]
    gn = np.asarray(np.abs(G_ext).max(axis=1).todense()).ravel() if mi else np.zeros(0)
    gn = np.where(gn > 0, gn, 1.0)
    G_w = (sp.diags(1.0 / gn) @ G_ext).tocsr() if mi else G_ext
    h_w = h_ext / gn if mi else h_ext
    an = np.asarray(np.abs(qp.A).max(axis=1).todense()).ravel() if me else np.zeros(0)
    an = np.where(an > 0, an, 1.0)
    A_w = (sp.diags(1.0 / an) @ qp.A).tocsr() if me else qp.A
    b_w = qp.b / an if me else qp.b
    h_scale = 1.0 + float(np.abs(h_w).max(initial=0.0))
    b_scale = 1.0 + float(np.abs(b_w).max(initial=0.0))
    lam_w = lam * gn
    w_w = w / gn
    active = np.flatnonzero(lam_w > np.maximum(w_w, 1e-10))
    mult_cap = 1e6 * (1.0 + float(np.abs(qp.c).max(initial=0.0)))
    banned: list[int] = []
    cautious = False
    seen: set[bytes] = set()
    prev_active = active
    added_now: np.ndarray = np.zeros(0, int)
    for _ in range(50):
        key = active.tobytes()
        if key in seen:
            cautious = True
        seen.add(key)
        GA = G_w[active]
        K = sp.bmat(
            [
                [qp.Q, A_w.T if me else None, GA.T if len(active) else None],
                [A_w if me else None, None, None],
                [GA if len(active) else None, None, None],
            ],
            format="csc",
        ) if (me or len(active)) else qp.Q.tocsc()
        m_all = me + len(active)
        reg = sp.diags(np.r_[np.full(n, 1e-9), np.full(m_all, -1e-9)]) if m_all else sp.diags(np.full(n, 1e-9))
        rhs = np.concatenate([-qp.c, b_w, h_w[active]])
        try:
            lu = splu((K + reg).tocsc())
        except RuntimeError:
            lu = None
        if lu is not None:
            sol = lu.solve(rhs)
            # Refine against the unregularized system to shed the shift.
            for _r in range(3):
                resid = rhs - (K @ sol if m_all else qp.Q @ sol)
                sol = sol + lu.solve(resid)
        blown = lu is None or not np.all(np.isfinite(sol)) or (
            m_all and float(np.max(np.abs(sol[n:]), initial=0.0)) > mult_cap
        )
        if blown:
            if len(added_now) == 0:
                return None
            # The activation made the face dependent; undo it.  With a
            # single added row the culprit is known and stays banned.
            if len(added_now) == 1:
                banned.append(int(added_now[0]))
            active = prev_active
            cautious = True
            added_now = np.zeros(0, int)
            continue
        xs = sol[:n]
        mult = sol[n + me :]
        added_now = np.zeros(0, int)
        if len(active) and float(mult.min()) < -1e-9:
            if cautious:
                neg = active[mult < -1e-9]
                active = active[active != neg.min()]
            else:
                active = active[mult >= -1e-9]
            prev_active = active
            continue
        slack = h_w - G_w @ xs if mi else np.zeros(0)
        viol = np.flatnonzero(slack < -1e-9 * h_scale)
        viol = np.setdiff1d(viol, np.asarray(banned, int))
        if len(viol):
            prev_active = active
            added_now = np.asarray([viol.min()] if cautious else viol, int)
            active = np.union1d(active, added_now)
            continue
        if banned and mi and float(np.min(h_w - G_w @ xs, initial=0.0)) < -1e-9 * h_scale:
            return None  # a banned row stays violated: wrong face
        if me and float(np.max(np.abs(A_w @ xs - b_w))) > 1e-7 * b_scale:
            return None
        ys = sol[n : n + me] / an if me else sol[n:n]
        lams = np.zeros(mi)
        lams[active] = mult / gn[active]
        return xs, ys, lams
    return None


def _feasibility_lp(qp: QuadraticProgram, tol: float) -> tuple[float, np.ndarray]:
    """Minimum elastic violation of the constraint system (0 = feasible).

    Returns the violation and the x part of the minimizer, which is a
    feasible (to tolerance) point whenever the violation is ~0.  A tiny
    quadratic tiebreak on the elastic variables keeps the LP well-posed.
    """
    G_ext, h_ext, _, _ = canonical_form(qp)
    n, me, mi = qp.n, qp.A.shape[0], G_ext.shape[0]
    nn = n + mi + 2 * me
    Q = sp.diags(np.r_[np.zeros(n), np.full(mi + 2 * me, 1e-8)], format="csr")
    c = np.concatenate([np.zeros(n), np.ones(mi + 2 * me)])
    A = sp.hstack([qp.A, sp.csr_matrix((me, mi)), sp.eye(me), -sp.eye(me)], format="csr") if me else sp.csr_matrix((0, nn))
    G_top = sp.hstack([G_ext, -sp.eye(mi), sp.csr_matrix((mi, 2 * me))], format="csr")
    G_bot = sp.hstack([sp.csr_matrix((mi + 2 * me, n)), -sp.eye(mi + 2 * me)], format="csr")
    G = sp.vstack([G_top, G_bot], format="csr")
    h = np.concatenate([h_ext, np.zeros(mi + 2 * me)])
    x, y, lam, w, status, _ = _ipm_core(Q, c, A, qp.b, G, h, max(tol, 1e-9), 200)
    # Report the recovered point's genuine worst violation, not the elastic
    # objective: the interior-point stop leaves every elastic at a small
    # positive value, and their sum grows with row count even when the
    # system is perfectly feasible.
    xp = x[:n]
    viol = 0.0
    if mi:
        viol = max(viol, float(np.max(G_ext @ xp - h_ext, initial=0.0)))
    if me:
        viol = max(viol, float(np.max(np.abs(qp.A @ xp - qp.b), initial=0.0)))
    return viol, xp


def _ipm_solve(qp: QuadraticProgram, tol: float, max_iter: int | None) -> QpSolution:
    G_ext, h_ext, _, _ = canonical_form(qp)
    # Vacuous zero rows (left behind by eliminations upstream) would pin an
    # interior-point slack at zero; widen them, or bail out if contradictory.
    if G_ext.shape[0]:
        zero_rows = np.flatnonzero(G_ext.getnnz(axis=1) == 0)
        if len(zero_rows):
            scale0 = 1.0 + float(np.abs(h_ext).max(initial=0.0))
            if np.any(h_ext[zero_rows] < -1e-9 * scale0):
                return _finish(qp, np.zeros(qp.n), np.zeros(qp.A.shape[0]),
                               np.zeros(G_ext.shape[0]), "infeasible", 0, "ipm", tol)
            h_ext = h_ext.copy()
            h_ext[zero_rows] = np.maximum(h_ext[zero_rows], 1.0)
    # Row equilibration for the inequality block keeps big-M rows tame.
    norms = np.asarray(np.abs(G_ext).max(axis=1).todense()).ravel() if G_ext.shape[0] else np.zeros(0)
    norms = np.where(norms > 0, norms, 1.0)
    D = sp.diags(1.0 / norms) if len(norms) else None
    G_s = (D @ G_ext).tocsr() if len(norms) else G_ext
    h_s = h_ext / norms if len(norms) else h_ext
    limit = max_iter or 120
    x, y, lam_s, w_s, status, iters = _ipm_core(qp.Q, qp.c, qp.A, qp.b, G_s, h_s, max(tol, 1e-9), limit)
    lam = lam_s / norms if len(norms) else lam_s
    w = w_s * norms if len(norms) else w_s

    # A stalled run often sits at a degenerate vertex with tiny residuals;
    # the active-set polish can still extract the exact solution from it,
    # so always attempt it before judging the raw iterate.
    polished = _polish(qp, G_ext, h_ext, x, y, lam, w, tol)
    if polished is not None:
        xs, ys, lams = polished
        cand = _finish(qp, xs, ys, np.clip(lams, 0.0, None), "optimal", iters, "ipm", tol,
                       active=np.flatnonzero(lams > 0))
        if cand.status == "optimal":
            return cand

    if status != "optimal" and np.all(np.isfinite(x)):
        # Proximal restart: a rank-deficient Hessian leaves whole optimal
        # faces, and the barrier path stalls inside them with multipliers
        # too smeared for the polish to read.  Recentring the objective on
        # the stalled point with a tiny strictly convex term barely moves
        # the face but makes every barrier system well conditioned, and
        # the clean solve gives a sharp active-set guess.
        delta = 1e-6 * (1.0 + float(np.abs(qp.c).max(initial=0.0))) / (
            1.0 + float(np.abs(x).max(initial=0.0)))
        Qp = (qp.Q + sp.eye(qp.n, format="csr") * delta).tocsr()
        cp = qp.c - delta * x
        x2, y2, lam2_s, w2_s, st2, it2 = _ipm_core(Qp, cp, qp.A, qp.b, G_s, h_s,
                                                   max(tol, 1e-9), limit)
        if np.all(np.isfinite(x2)):
            lam2 = lam2_s / norms if len(norms) else lam2_s
            w2 = w2_s * norms if len(norms) else w2_s
            polished = _polish(qp, G_ext, h_ext, x2, y2, lam2, w2, tol)
            if polished is not None:
                xs, ys, lams = polished
                cand = _finish(qp, xs, ys, np.clip(lams, 0.0, None), "optimal",
                               iters + it2, "ipm", tol, active=np.flatnonzero(lams > 0))
                if cand.status == "optimal":
                    return cand
            if st2 == "optimal":
                # The recentred iterate itself may satisfy the original
                # optimality system to tolerance; the residual gate in
                # _finish keeps this honest.
                cand = _finish(qp, x2, y2, np.clip(lam2, 0.0, None), "optimal",
                               iters + it2, "ipm", tol)
                if cand.status == "optimal":
                    return cand

    if status in ("max-iter", "diverged", "factor-fail"):
        infeas, _ = _feasibility_lp(qp, tol)
        scale = 1.0 + float(np.abs(h_ext).max(initial=0.0)) + float(np.abs(qp.b).max(initial=0.0))
        if infeas > 1e-6 * scale:
            return _finish(qp, x, y, np.clip(lam, 0, None), "infeasible", iters, "ipm", tol)
        return _finish(qp, x, y, np.clip(lam, 0, None), "max-iter", iters, "ipm", tol)

    return _finish(qp, x, y, np.clip(lam, 0.0, None), "optimal", iters, "ipm", tol)


def solve_convex_qp(
    qp: QuadraticProgram,
    tol: float = 1e-8,
    max_iter: int | None = None,
    method: str = "auto",
) -> QpSolution:
    """Solve a convex QP deterministically.

    ``method`` is ``"active-set"``, ``"ipm"`` or ``"auto"`` (dense
    active-set up to a size threshold, sparse interior point beyond).
    Optimal status guarantees KKT residuals within tolerance; infeasible
    and unbounded problems are detected and reported.
    """
    qp.check_dims()
    if method == "auto":
        method = "active-set" if qp.n <= _AS_SIZE_LIMIT else "ipm"
    if method not in ("active-set", "ipm"):
        raise ValueError(f"solve_convex_qp: unknown method {method!r}")
    pinned = np.flatnonzero(qp.lb == qp.ub)
    if len(pinned):
        return _solve_with_pinned(qp, pinned, tol, max_iter, method)
    return _dispatch(qp, tol, max_iter, method)


def _dispatch(qp: QuadraticProgram, tol: float, max_iter: int | None, method: str) -> QpSolution:
    if method == "active-set":
        sol = _active_set_solve(qp, tol, max_iter)
        if sol.status != "max-iter":
            return sol
        # The pivoting core bails out of hopelessly degenerate vertices on
        # the promise that the barrier route gets a second look.  Keep
        # whichever attempt certifies the better (larger) lower bound.
        alt = _ipm_solve(qp, tol, max_iter)
        if alt.status == "optimal" or alt.dual_bound >= sol.dual_bound:
            return alt
        return sol
    return _ipm_solve(qp, tol, max_iter)
