"""Adaptive-cruise-control fixture used to illustrate relative degree two."""

import numpy as np


def acc_plant(v_e, d, v0, u):
    """Derivatives ``(dv_e/dt, dd/dt)`` of ego speed and headway."""
    return u, v0 - v_e


def acc_vector_fields(v0):
    """Drift ``f`` and input field ``g`` over the state ``[d, v_e]``."""

    def f(x):
        return np.array([v0 - x[1], 0.0])

    def g(x):
        return np.array([0.0, 1.0])

    return f, g


def _grad(fun, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        out[i] = (fun(x + e) - fun(x - e)) / (2 * eps)
    return out


def lie_derivative(fun, field):
    """``x -> grad(fun)(x) . field(x)``."""
    return lambda x: float(_grad(fun, x) @ field(x))


def headway_input_coefficients(v0=20.0, d_delta=10.0, x=(50.0, 15.0)):
    """Input coefficients of the first and second derivatives of ``b = d - d_delta``.

    Returns ``(L_g b, L_g L_f b)`` at ``x = [d, v_e]``.
    """
    f, g = acc_vector_fields(v0)

    def b(z):
        return z[0] - d_delta

    first = lie_derivative(b, g)(x)
    second = lie_derivative(lie_derivative(b, f), g)(x)
    return first, second


def relative_degree(v0=20.0, d_delta=10.0, x=(50.0, 15.0), tol=1e-9, max_order=4):
    f, g = acc_vector_fields(v0)
    fun = lambda z: z[0] - d_delta  # noqa: E731
    for r in range(1, max_order + 1):
        if abs(lie_derivative(fun, g)(x)) > tol:
            return r
        fun = lie_derivative(fun, f)
    return None
