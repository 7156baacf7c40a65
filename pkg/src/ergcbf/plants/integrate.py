import numpy as np


class NumericalFailure(FloatingPointError):
    """A state became non-finite during integration."""


def rk4_step(dynamics, state, u, dt):
    """Classical Runge-Kutta step with the input held over the step.

    ``dynamics(state, u)`` returns the state derivative.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(state, dtype=float)
    k1 = dynamics(x, u)
    k2 = dynamics(x + 0.5 * dt * k1, u)
    k3 = dynamics(x + 0.5 * dt * k2, u)
    k4 = dynamics(x + dt * k3, u)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalFailure(f"non-finite state after RK4 step: {out!r} (from {x!r}, input {u!r})")
    return out
