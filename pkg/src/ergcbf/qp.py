"""Dense primal active-set solver for small convex QPs.

Solves::

    minimize    0.5 u' H u + f' u
    subject to  G u <= h
                lower <= u <= upper

Box bounds are folded into the inequality rows (after the general rows,
lower bounds first, then upper bounds) so that multipliers and active-set
indices refer to one stacked constraint list.
"""

from dataclasses import dataclass, field

import numpy as np

EPS_REG = 1e-9
MAX_PIVOTS = 1000
FEAS_TOL = 1e-9

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    G: np.ndarray = None
    h: np.ndarray = None
    lower: np.ndarray = None
    upper: np.ndarray = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        p = self.f.size
        if self.H.shape != (p, p):
            raise ValueError(f"H has shape {self.H.shape}, expected ({p}, {p})")
        if self.G is None:
            self.G = np.zeros((0, p))
            self.h = np.zeros(0)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, p)
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if self.h.size != self.G.shape[0]:
            raise ValueError("G and h have inconsistent row counts")
        self.lower = np.full(p, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (p,)).copy()
        self.upper = np.full(p, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (p,)).copy()

    @property
    def n_vars(self):
        return self.f.size

    def stacked(self):
        """All inequalities as one ``(A, b)`` pair with ``A u <= b``."""
        p = self.n_vars
        eye = np.eye(p)
        lo = np.isfinite(self.lower)
        up = np.isfinite(self.upper)
        A = np.vstack([self.G, -eye[lo], eye[up]])
        b = np.concatenate([self.h, -self.lower[lo], self.upper[up]])
        return A, b

    def objective(self, u):
        return float(0.5 * u @ self.H @ u + self.f @ u)


@dataclass
class QpSolution:
    u: np.ndarray
    status: str
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    active_set: tuple = ()
    kkt_residual: float = np.inf
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


@dataclass
class KktReport:
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    @property
    def worst(self):
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


def check_kkt(problem, u, duals):
    """Residuals of the KKT conditions at ``(u, duals)``.

    ``duals`` is indexed like ``problem.stacked()``.
    """
    A, b = problem.stacked()
    u = np.asarray(u, dtype=float)
    lam = np.asarray(duals, dtype=float).reshape(-1)
    grad = problem.H @ u + problem.f + A.T @ lam
    slack = A @ u - b
    return KktReport(
        stationarity=float(np.max(np.abs(grad), initial=0.0)),
        primal=float(max(np.max(slack, initial=0.0), 0.0)),
        dual=float(max(-np.min(lam, initial=0.0), 0.0)),
        complementarity=float(np.max(np.abs(lam * slack), initial=0.0)),
    )


def _regularized(H):
    w = np.linalg.eigvalsh(0.5 * (H + H.T))
    if w.size and w[0] <= EPS_REG * max(1.0, abs(w[-1])):
        return H + EPS_REG * np.eye(H.shape[0])
    return H


def _eq_step(H, g, Aw):
    """Step ``s`` and multipliers for min 0.5 s'Hs + g's s.t. Aw s = 0.

    Null-space method: a working set of full column rank gives ``s = 0``
    exactly, which keeps vertex iterations free of round-off steps.
    """
    p = H.shape[0]
    if Aw.shape[0] == 0:
        Z = np.eye(p)
    else:
        _, sv, Vt = np.linalg.svd(Aw)
        rank = int(np.sum(sv > 1e-12 * max(sv[0], 1.0)))
        Z = Vt[rank:].T
    if Z.shape[1]:
        Hz = Z.T @ H @ Z
        s = -Z @ np.linalg.solve(Hz, Z.T @ g)
    else:
        s = np.zeros(p)
    lam = np.linalg.lstsq(Aw.T, -(g + H @ s), rcond=None)[0] if Aw.shape[0] else np.zeros(0)
    return s, lam


def _active_set_loop(H, f, A, b, u, working, max_pivots=MAX_PIVOTS):
    """Primal active-set iterations from a feasible ``u``.

    Returns ``(u, working, multipliers, pivots, converged)``.
    """
    working = list(working)
    lam_w = np.zeros(0)
    for pivot in range(max_pivots):
        Aw = A[working]
        s, lam_w = _eq_step(H, H @ u + f, Aw)
        scale = max(1.0, np.linalg.norm(u))
        if np.linalg.norm(s) <= 1e-12 * scale:
            if not working or np.min(lam_w) >= -1e-12:
                return u, working, lam_w, pivot, True
            # drop the most negative multiplier
            working.pop(int(np.argmin(lam_w)))
            continue
        # ratio test over constraints not in the working set
        step = 1.0
        blocking = None
        As = A @ s
        cand = As > 1e-14
        cand[working] = False
        if cand.any():
            idx = np.flatnonzero(cand)
            ratios = np.maximum(b[idx] - A[idx] @ u, 0.0) / As[idx]
            j = int(np.argmin(ratios))
            if ratios[j] < step:
                step = float(ratios[j])
                blocking = int(idx[j])
        u = u + step * s
        if blocking is not None:
            working.append(blocking)
    return u, working, lam_w, max_pivots, False


def _phase_one(A, b, u0):
    """Find a point with ``A u <= b``; returns ``(u, violation)``.

    Minimises an auxiliary level ``t`` subject to ``A u - t <= b`` and
    ``t >= -1`` with the same active-set loop, started from a trivially
    feasible ``(u0, t0)``.
    """
    m, p = A.shape
    viol = np.max(A @ u0 - b, initial=-np.inf)
    if viol <= 0.0:
        return u0, viol
    Aa = np.zeros((m + 1, p + 1))
    Aa[:m, :p] = A
    Aa[:m, p] = -1.0
    Aa[m, p] = -1.0
    ba = np.concatenate([b, [1.0]])
    Ha = 1e-8 * np.eye(p + 1)
    fa = np.zeros(p + 1)
    fa[p] = 1.0
    z0 = np.concatenate([u0, [viol + 1.0]])
    z, _, _, _, _ = _active_set_loop(Ha, fa, Aa, ba, z0, [], max_pivots=4 * MAX_PIVOTS)
    u = z[:p]
    return u, float(np.max(A @ u - b, initial=-np.inf))


def solve(problem, warm_start=(), u0=None):
    """Solve ``problem`` with a primal active-set method.

    ``warm_start`` is a sequence of stacked-constraint indices (typically
    the previous solution's active set); only those active at the starting
    point are kept.
    """
    A, b = problem.stacked()
    p = problem.n_vars
    H = _regularized(problem.H)
    start = np.zeros(p) if u0 is None else np.asarray(u0, dtype=float).copy()
    lo, up = problem.lower, problem.upper
    start = np.clip(start, np.where(np.isfinite(lo), lo, -np.inf), np.where(np.isfinite(up), up, np.inf))

    u, viol = _phase_one(A, b, start)
    scale = max(1.0, np.max(np.abs(b), initial=0.0))
    if viol > FEAS_TOL * scale:
        return QpSolution(u=u, status=INFEASIBLE)
    # recover a point feasible to working precision before phase two
    b_eff = np.maximum(b, A @ u) if viol > 0 else b

    working = []
    for i in warm_start:
        if 0 <= i < A.shape[0] and abs(A[i] @ u - b_eff[i]) <= 1e-10 * scale:
            cand = A[working + [i]]
            if np.linalg.matrix_rank(cand) == len(working) + 1:
                working.append(int(i))

    u, working, lam_w, pivots, ok = _active_set_loop(H, problem.f, A, b_eff, u, working)
    duals = np.zeros(A.shape[0])
    if working:
        # multipliers against the unregularised objective
        Aw = A[working]
        lam = np.linalg.lstsq(Aw.T, -(problem.H @ u + problem.f), rcond=None)[0]
        duals[working] = np.maximum(lam, 0.0)
    report = check_kkt(problem, u, duals)
    status = OPTIMAL if ok else MAX_ITERATIONS
    return QpSolution(
        u=u,
        status=status,
        duals=duals,
        active_set=tuple(sorted(working)),
        kkt_residual=report.worst,
        iterations=pivots,
    )
