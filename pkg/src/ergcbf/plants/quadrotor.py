"""Rigid-body quadrotor with a geometric SE(3) tracking controller.

Frames follow the thrust-along-minus-b3 convention: the inertial z axis
points down, gravity acts along +e3 and thrust along -R e3.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .. import linalg
from .integrate import rk4_step

E3 = np.array([0.0, 0.0, 1.0])


class ControllerError(RuntimeError):
    pass


def hat(w):
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def vee(S):
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def _saturate(v, limit):
    n = np.linalg.norm(v)
    return v * (limit / n) if n > limit else v


def orthonormalize(R):
    """Closest rotation matrix (polar factor via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    Rn = U @ Vt
    if np.linalg.det(Rn) < 0:
        U[:, -1] *= -1
        Rn = U @ Vt
    return Rn


@dataclass
class QuadrotorState:
    x: np.ndarray
    v: np.ndarray
    R: np.ndarray
    Omega: np.ndarray

    def vector(self):
        return np.concatenate([self.x, self.v, self.R.reshape(-1), self.Omega])

    @classmethod
    def from_vector(cls, z):
        z = np.asarray(z, dtype=float)
        return cls(z[0:3].copy(), z[3:6].copy(), z[6:15].reshape(3, 3).copy(), z[15:18].copy())

    @classmethod
    def hover(cls, position):
        return cls(np.asarray(position, float), np.zeros(3), np.eye(3), np.zeros(3))


@dataclass
class QuadrotorParams:
    m: float = 1.0
    J: np.ndarray = field(default_factory=lambda: np.diag([0.02, 0.02, 0.04]))
    gravity: float = 9.81
    k_x: float = 8.0
    k_v: float = 4.0
    k_R: float = 2.0
    k_Omega: float = 0.4
    arm: float = 0.2
    ff_accel_max: float = 2.0
    ff_rate_max: float = 2.0
    ff_rate_dot_max: float = 10.0

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float)
        if self.m <= 0:
            raise ValueError("mass must be positive")
        if not linalg.is_spd(self.J):
            raise ValueError("inertia matrix must be symmetric positive definite")
        for name in ("k_x", "k_v", "k_R", "k_Omega"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("ff_accel_max", "ff_rate_max", "ff_rate_dot_max"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")


def quad_dynamics(params):
    m, J, grav = params.m, params.J, params.gravity
    Jinv = np.linalg.inv(J)

    def f(z, u):
        thrust, M = u
        v = z[3:6]
        R = z[6:15].reshape(3, 3)
        Om = z[15:18]
        vdot = grav * E3 - (thrust / m) * (R @ E3)
        Rdot = R @ hat(Om)
        Omdot = Jinv @ (M - np.cross(Om, J @ Om))
        return np.concatenate([v, vdot, Rdot.reshape(-1), Omdot])

    return f


def desired_attitude(A, heading):
    """``R_d`` whose third axis is ``-A/|A|`` and first axis follows ``heading``."""
    nA = np.linalg.norm(A)
    if nA < 1e-9:
        raise ControllerError("desired thrust vector vanishes (commanded acceleration equals gravity)")
    b3 = -A / nA
    b2 = np.cross(b3, np.asarray(heading, float))
    n2 = np.linalg.norm(b2)
    if n2 < 1e-9:
        raise ControllerError("heading is parallel to the desired thrust axis")
    b2 /= n2
    b1 = np.cross(b2, b3)
    return np.column_stack([b1, b2, b3])


def quad_geometric_controller(s, x_d, xd_dot, xd_ddot, heading, params, R_d=None,
                              Omega_d=np.zeros(3), Omega_d_dot=np.zeros(3)):
    """Thrust and moment of the geometric tracking law.

    Returns ``(f, M, R_d)``; ``R_d`` is built from the desired thrust
    direction unless supplied.
    """
    m, J, grav = params.m, params.J, params.gravity
    e_x = s.x - np.asarray(x_d, float)
    e_v = s.v - np.asarray(xd_dot, float)
    A = -params.k_x * e_x - params.k_v * e_v - m * grav * E3 + m * np.asarray(xd_ddot, float)
    if R_d is None:
        R_d = desired_attitude(A, heading)
    f = float(-A @ (s.R @ E3))
    e_R = 0.5 * vee(R_d.T @ s.R - s.R.T @ R_d)
    RtRd = s.R.T @ R_d
    e_Om = s.Omega - RtRd @ Omega_d
    M = (-params.k_R * e_R - params.k_Omega * e_Om + np.cross(s.Omega, J @ s.Omega)
         - J @ (hat(s.Omega) @ RtRd @ Omega_d - RtRd @ Omega_d_dot))
    return f, M, R_d


class Quadrotor:
    """Quadrotor tracking the governor path with finite-difference feed-forward.

    The safety margin uses the hover linearisation of the translational
    loop, ``m e'' = -k_x e - k_v e'``, over the state ``[position, velocity]``.
    """

    name = "quadrotor"
    dim = 3

    def __init__(self, params=None, heading=(1.0, 0.0, 0.0), lyapunov_weight=None, check=True):
        self.params = params or QuadrotorParams()
        self.heading = np.asarray(heading, dtype=float)
        self.lyapunov_weight = np.eye(6) if lyapunov_weight is None else np.asarray(lyapunov_weight, float)
        self._f = quad_dynamics(self.params)
        if check and not linalg.is_hurwitz(self.A_cl):
            raise ValueError("translational gains do not give a Hurwitz hover linearisation")
        self.reset()

    def reset(self):
        self._g_hist = []
        self._Rd_prev = None
        self._Omd_prev = np.zeros(3)

    @property
    def n_state(self):
        return 18

    @property
    def theta(self):
        return np.array([self.params.k_x, self.params.k_v])

    def with_theta(self, theta, check=True):
        p = self.params
        new = QuadrotorParams(p.m, p.J, p.gravity, float(theta[0]), float(theta[1]), p.k_R, p.k_Omega, p.arm,
                              p.ff_accel_max, p.ff_rate_max, p.ff_rate_dot_max)
        return Quadrotor(new, self.heading, self.lyapunov_weight, check=check)

    @cached_property
    def A_cl(self):
        p = self.params
        A = np.zeros((6, 6))
        A[:3, 3:] = np.eye(3)
        A[3:, :3] = -p.k_x / p.m * np.eye(3)
        A[3:, 3:] = -p.k_v / p.m * np.eye(3)
        return A

    @cached_property
    def C(self):
        return np.hstack([np.eye(3), np.zeros((3, 3))])

    @cached_property
    def P(self):
        return linalg.solve_lyapunov(self.A_cl, self.lyapunov_weight)

    @cached_property
    def l(self):
        return linalg.output_gain(self.P, self.C)

    def initial_state(self, position, velocity=None):
        s = QuadrotorState.hover(position)
        if velocity is not None:
            s.v = np.asarray(velocity, float)
        return s.vector()

    def equilibrium(self, g):
        return np.concatenate([np.asarray(g, dtype=float), np.zeros(3)])

    def tracking_state(self, z):
        return np.asarray(z, dtype=float)[:6]

    def output(self, z):
        return np.asarray(z, dtype=float)[:3]

    def dynamics(self, z, u):
        return self._f(z, u)

    def _reference(self, g, dt):
        # causal finite differences of the governor path
        self._g_hist.append(np.asarray(g, dtype=float).copy())
        self._g_hist = self._g_hist[-3:]
        h = self._g_hist
        vel = (h[-1] - h[-2]) / dt if len(h) >= 2 else np.zeros(3)
        acc = (h[-1] - 2 * h[-2] + h[-3]) / dt ** 2 if len(h) >= 3 else np.zeros(3)
        # g is only piecewise smooth; a kink would otherwise reach the
        # controller as a 1/dt^2 acceleration spike
        return vel, _saturate(acc, self.params.ff_accel_max)

    def advance(self, z, g, t, dt):
        s = QuadrotorState.from_vector(z)
        xd_dot, xd_ddot = self._reference(g, dt)
        p = self.params
        A = -p.k_x * (s.x - g) - p.k_v * (s.v - xd_dot) - p.m * p.gravity * E3 + p.m * xd_ddot
        R_d = desired_attitude(A, self.heading)
        if self._Rd_prev is None:
            Om_d = np.zeros(3)
        else:
            Om_d = vee(R_d.T @ (R_d - self._Rd_prev) - (R_d - self._Rd_prev).T @ R_d) / (2 * dt)
        Om_d = _saturate(Om_d, p.ff_rate_max)
        Om_d_dot = (Om_d - self._Omd_prev) / dt if self._Rd_prev is not None else np.zeros(3)
        Om_d_dot = _saturate(Om_d_dot, p.ff_rate_dot_max)
        self._Rd_prev, self._Omd_prev = R_d, Om_d
        f, M, _ = quad_geometric_controller(s, g, xd_dot, xd_ddot, self.heading, p, R_d, Om_d, Om_d_dot)
        z_next = rk4_step(self._f, z, (f, M), dt)
        R = orthonormalize(z_next[6:15].reshape(3, 3))
        z_next[6:15] = R.reshape(-1)
        return z_next, np.concatenate([[f], M])

    def lyapunov_value(self, z, g):
        e = self.tracking_state(z) - self.equilibrium(g)
        return float(e @ self.P @ e)
