"""Reference governor steered by a CBF quadratic program.

The governor reference ``g`` moves as ``g' = Delta(x, g) u_g`` where
``Delta = d_s(g)^2 - l^2 V(x, g)`` is the dynamic safety margin of the
prestabilised plant and ``u_g`` solves a small QP that keeps ``g`` clear of
obstacles and the STL barrier nonnegative.
"""

from dataclasses import dataclass, field

import numpy as np

from . import qp
from .world import distance_to_unsafe, unsafe_gradient

SLACK_WEIGHT = 1e6


class GovernorFailure(RuntimeError):
    """The navigation QP stayed infeasible after relaxing the STL rows."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


@dataclass
class GovernorConfig:
    """Navigation-field weights and limits.

    ``H`` weights ``u_g' H u_g``; ``q_dist < 0`` weights the squared
    look-ahead clearance (negative, so clearance is rewarded); class-K
    functions are linear, ``alpha(b) = kappa * b``.
    """

    H: np.ndarray = None
    q_dist: float = -1e-3
    kappa_obs: float = 1.0
    kappa_stl: float = 1.0
    u_max: float = 5.0
    delta_floor: float = 0.0
    delta_max: float = np.inf
    dim: int = 2

    def __post_init__(self):
        if self.H is None:
            self.H = np.eye(self.dim)
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.shape == (1, 1) and self.dim > 1:
            H = H[0, 0] * np.eye(self.dim)
        self.H = H
        if H.shape != (self.dim, self.dim):
            raise ValueError(f"H must be {self.dim}x{self.dim}")
        if np.min(np.linalg.eigvalsh(0.5 * (H + H.T))) < -1e-10:
            raise ValueError("H must be positive semidefinite")
        if not self.q_dist < 0:
            raise ValueError("q_dist must be negative")
        if self.kappa_obs <= 0 or self.kappa_stl <= 0:
            raise ValueError("class-K gains must be positive")
        if self.u_max <= 0:
            raise ValueError("u_max must be positive")
        if self.delta_floor < 0:
            raise ValueError("delta_floor must be nonnegative")


@dataclass
class QpDiagnostics:
    status: str = ""
    u_g: np.ndarray = None
    active: tuple = ()
    slack: float = 0.0
    relaxed: bool = False
    iterations: int = 0
    b_stl: float = np.inf
    stl_rate: float = 0.0


@dataclass
class GovernorState:
    g: np.ndarray
    dsm: float
    t: float = 0.0
    last_qp: QpDiagnostics = field(default_factory=QpDiagnostics)


@dataclass
class NavigationQp:
    problem: qp.QpProblem
    obstacle_rows: list
    stl_rows: list


def lyapunov_energy(x, g, P):
    """``(x - xbar_g)' P (x - xbar_g)`` with ``xbar_g = [g, 0, ...]``."""
    x = np.asarray(x, dtype=float)
    e = x.copy()
    e[: len(g)] -= np.asarray(g, dtype=float)
    return float(e @ P @ e)


def dsm(x, g, P, l, env):
    """Dynamic safety margin ``d_s(g)|d_s(g)| - l^2 V(x, g)``.

    The signed square keeps the margin negative when ``g`` itself is in
    the unsafe set.
    """
    d = distance_to_unsafe(g, env)
    if not np.isfinite(d):
        return np.inf
    return float(d * abs(d) - l * l * lyapunov_energy(x, g, P))


def effective_margin(delta, cfg):
    """Multiplier actually applied to ``u_g``."""
    if not np.isfinite(delta):
        # no obstacles and no arena: plain g' = u_g
        return min(1.0, cfg.delta_max)
    return float(min(max(delta, cfg.delta_floor), cfg.delta_max))


def assemble_navigation_qp(g, t, delta, env, b_stl, cfg, dt):
    """Build the navigation-field QP over ``u_g`` (``0.5 u' H2 u + f' u``).

    Rows: one clearance constraint per obstacle (and the arena), one row
    for the STL barrier if any component is active, box bounds on ``u_g``.
    Every row uses the realised rate ``Delta * u_g``.
    """
    g = np.asarray(g, dtype=float)
    p = g.size
    H2 = 2.0 * cfg.H
    f = np.zeros(p)

    d0 = distance_to_unsafe(g, env)
    if np.isfinite(d0):
        c = dt * delta * unsafe_gradient(g, env)
        f = f + 2.0 * cfg.q_dist * d0 * c
        quad = 2.0 * cfg.q_dist * np.outer(c, c)
        lam_h = np.min(np.linalg.eigvalsh(H2))
        worst = -np.min(np.linalg.eigvalsh(quad))
        # keep the objective convex: concave part limited to half the curvature of H
        if worst > 0:
            quad = quad * min(1.0, 0.5 * lam_h / worst)
        H2 = H2 + quad

    G, h = [], []
    obstacle_rows, stl_rows = [], []
    terms = env.barrier_terms(g)
    if terms.size:
        grads = env.barrier_gradients(g)
        for b, grad in zip(terms, grads):
            obstacle_rows.append(len(G))
            G.append(-delta * grad)
            h.append(cfg.kappa_obs * b)
    if b_stl is not None and b_stl.active(t):
        val = b_stl.value(g, t)
        stl_rows.append(len(G))
        G.append(-delta * b_stl.spatial_gradient(g, t))
        h.append(cfg.kappa_stl * val + b_stl.time_derivative(g, t))
    bound = np.full(p, cfg.u_max)
    prob = qp.QpProblem(H2, f, np.array(G).reshape(-1, p), np.array(h), -bound, bound)
    return NavigationQp(prob, obstacle_rows, stl_rows)


def relax_and_resolve(problem, stl_rows, weight=None):
    """Re-solve with one nonnegative slack shared by the STL rows.

    Obstacle rows stay hard.  Returns ``(solution, slack)``; the solution's
    ``u`` excludes the slack coordinate.
    """
    p = problem.n_vars
    if weight is None:
        weight = SLACK_WEIGHT * max(np.linalg.norm(problem.H), 1.0)
    H = np.zeros((p + 1, p + 1))
    H[:p, :p] = problem.H
    H[p, p] = 2.0 * weight
    f = np.append(problem.f, 0.0)
    G = np.hstack([problem.G, np.zeros((problem.G.shape[0], 1))])
    for r in stl_rows:
        G[r, p] = -1.0
    lower = np.append(problem.lower, 0.0)
    upper = np.append(problem.upper, np.inf)
    relaxed = qp.QpProblem(H, f, G, problem.h, lower, upper)
    sol = qp.solve(relaxed)
    slack = float(sol.u[p]) if sol.optimal else np.nan
    sol.u = sol.u[:p]
    return sol, slack


class Governor:
    """First-order reference governor for one simulation run."""

    def __init__(self, env, barrier, P, l, cfg):
        self.env = env
        self.barrier = barrier
        self.P = np.asarray(P, dtype=float)
        self.l = float(l)
        self.cfg = cfg
        self._warm = ()

    def margin(self, x, g):
        return dsm(x, g, self.P, self.l, self.env)

    def solve_field(self, g, t, delta, dt):
        """Navigation input ``u_g`` at ``(g, t)``; returns ``(u_g, diagnostics)``."""
        delta_eff = effective_margin(delta, self.cfg)
        nav = assemble_navigation_qp(g, t, delta_eff, self.env, self.barrier, self.cfg, dt)
        sol = qp.solve(nav.problem, warm_start=self._warm)
        slack, relaxed = 0.0, False
        if not sol.optimal and nav.stl_rows:
            sol, slack = relax_and_resolve(nav.problem, nav.stl_rows)
            relaxed = True
        if not sol.optimal:
            raise GovernorFailure(
                f"navigation QP {sol.status} at t = {t:.3f} s",
                dump={"t": t, "g": np.asarray(g).tolist(), "delta": delta,
                      "G": nav.problem.G.tolist(), "h": nav.problem.h.tolist()},
            )
        self._warm = () if relaxed else sol.active_set
        b_val = self.barrier.value(g, t) if self.barrier is not None else np.inf
        b_rate = self.barrier.time_derivative(g, t) if self.barrier is not None else 0.0
        diag = QpDiagnostics(sol.status, sol.u.copy(), sol.active_set, slack, relaxed,
                             sol.iterations, b_val, b_rate)
        return sol.u, diag

    def step(self, state, x, dt):
        """Advance ``g`` by one explicit-Euler step of ``g' = Delta u_g``."""
        delta = self.margin(x, state.g)
        u, diag = self.solve_field(state.g, state.t, delta, dt)
        g_next = governor_update(state.g, effective_margin(delta, self.cfg), u, dt)
        return GovernorState(g_next, delta, state.t + dt, diag)


def governor_update(g, delta, u_g, dt):
    """``g + dt * max(Delta, 0) * u_g``."""
    return np.asarray(g, dtype=float) + dt * max(float(delta), 0.0) * np.asarray(u_g, dtype=float)
