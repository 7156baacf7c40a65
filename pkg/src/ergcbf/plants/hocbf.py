"""Second-order exponential CBF safety filter for the double integrator.

Baseline for the governor scheme: the agent tracks a target directly and
every obstacle ``b = |x - o|^2 - r^2`` is enforced through
``b'' + (k1 + k2) b' + k1 k2 b >= 0``.
"""

from dataclasses import dataclass

import numpy as np

from .. import qp
from .double_integrator import DoubleIntegratorGains, DoubleIntegratorState, di_controller


@dataclass
class HocbfResult:
    u: np.ndarray
    feasible: bool
    active: tuple = ()


def hocbf_rows(s, env, k1, k2):
    """Constraint rows ``G u <= h``, one per obstacle."""
    x, v = np.asarray(s.x, float), np.asarray(s.v, float)
    G, h = [], []
    for o in env.obstacles:
        d = x - np.asarray(o.center)
        b = d @ d - o.radius ** 2
        bdot = 2 * d @ v
        # b'' = 2|v|^2 + 2 d.u
        G.append(-2 * d)
        h.append(2 * v @ v + (k1 + k2) * bdot + k1 * k2 * b)
    return np.array(G).reshape(-1, x.size), np.array(h)


def hocbf_controller(s, target, env, k1=1.0, k2=1.0, gains=None, u_max=None):
    """Minimally modified PD input toward ``target``; zero input when infeasible."""
    gains = gains or DoubleIntegratorGains()
    u_nom = di_controller(s, target, gains)
    G, h = hocbf_rows(s, env, k1, k2)
    n = u_nom.size
    bound = None if u_max is None else np.full(n, float(u_max))
    prob = qp.QpProblem(2 * np.eye(n), -2 * u_nom, G, h,
                        None if bound is None else -bound, bound)
    sol = qp.solve(prob)
    if not sol.optimal:
        return HocbfResult(np.zeros(n), False)
    return HocbfResult(sol.u, True, sol.active_set)


__all__ = ["DoubleIntegratorState", "HocbfResult", "hocbf_controller", "hocbf_rows"]
