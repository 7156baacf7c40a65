"""Planar double integrator tracked by a per-axis PD law."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .. import linalg
from .integrate import rk4_step


class UnstableGainsError(ValueError):
    pass


@dataclass(frozen=True)
class DoubleIntegratorState:
    x: np.ndarray
    v: np.ndarray

    def vector(self):
        return np.concatenate([self.x, self.v])

    @classmethod
    def from_vector(cls, z, dim=2):
        z = np.asarray(z, dtype=float)
        return cls(z[:dim].copy(), z[dim:].copy())


@dataclass(frozen=True)
class DoubleIntegratorGains:
    k_p: float = -6.0
    k_d: float = -4.0

    def as_array(self):
        return np.array([self.k_p, self.k_d])


def di_controller(s, g, gains):
    """Acceleration ``k_p (x - g) + k_d v`` applied coordinate-wise."""
    return gains.k_p * (np.asarray(s.x) - np.asarray(g)) + gains.k_d * np.asarray(s.v)


class DoubleIntegrator:
    """State ``z = [position, velocity]``, input acceleration, output position.

    ``lyapunov_weight`` is the ``Q`` of the closed-loop Lyapunov equation.
    """

    name = "double_integrator"

    def __init__(self, gains=DoubleIntegratorGains(), dim=2, lyapunov_weight=None, check=True):
        self.gains = gains
        self.dim = dim
        n = 2 * dim
        self.lyapunov_weight = np.eye(n) if lyapunov_weight is None else np.asarray(lyapunov_weight, float)
        if check and not linalg.is_hurwitz(self.A_cl):
            raise UnstableGainsError(
                f"k_p={gains.k_p:g}, k_d={gains.k_d:g} do not make A+BK Hurwitz")

    @property
    def n_state(self):
        return 2 * self.dim

    @property
    def theta(self):
        return self.gains.as_array()

    def with_theta(self, theta, check=True):
        return DoubleIntegrator(DoubleIntegratorGains(float(theta[0]), float(theta[1])),
                                self.dim, self.lyapunov_weight, check=check)

    @cached_property
    def A(self):
        d = self.dim
        A = np.zeros((2 * d, 2 * d))
        A[:d, d:] = np.eye(d)
        return A

    @cached_property
    def B(self):
        d = self.dim
        return np.vstack([np.zeros((d, d)), np.eye(d)])

    @cached_property
    def C(self):
        d = self.dim
        return np.hstack([np.eye(d), np.zeros((d, d))])

    @cached_property
    def K(self):
        d = self.dim
        return np.hstack([self.gains.k_p * np.eye(d), self.gains.k_d * np.eye(d)])

    @cached_property
    def dK_dtheta(self):
        """``dK/dk_p`` and ``dK/dk_d`` stacked along the first axis."""
        d = self.dim
        z = np.zeros((d, d))
        return np.array([np.hstack([np.eye(d), z]), np.hstack([z, np.eye(d)])])

    @cached_property
    def A_cl(self):
        return self.A + self.B @ self.K

    @cached_property
    def P(self):
        return linalg.solve_lyapunov(self.A_cl, self.lyapunov_weight)

    @cached_property
    def l(self):
        return linalg.output_gain(self.P, self.C)

    def initial_state(self, position, velocity=None):
        position = np.asarray(position, dtype=float)
        velocity = np.zeros(self.dim) if velocity is None else np.asarray(velocity, dtype=float)
        return np.concatenate([position, velocity])

    def equilibrium(self, g):
        return np.concatenate([np.asarray(g, dtype=float), np.zeros(self.dim)])

    def tracking_state(self, z):
        return np.asarray(z, dtype=float)

    def output(self, z):
        return np.asarray(z, dtype=float)[: self.dim]

    def control(self, z, g):
        return self.K @ (np.asarray(z) - self.equilibrium(g))

    def dynamics(self, z, u):
        d = self.dim
        return np.concatenate([z[d:], u])

    def advance(self, z, g, t, dt):
        """One closed-loop step; returns ``(next_state, plant_input)``."""
        u = self.control(z, g)
        return rk4_step(self.dynamics, z, u, dt), u

    def lyapunov_value(self, z, g):
        e = self.tracking_state(z) - self.equilibrium(g)
        return float(e @ self.P @ e)
