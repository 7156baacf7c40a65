"""Gradient-based tuning of the tracking gains.

The loss is the accumulated squared tracking error ``sum |C x - g|^2 dt``
up to the agent's task-completion time.  Its gradient with respect to the
gains comes from forward sensitivities ``S = dz/dtheta`` propagated along
the logged run with the governor path held fixed, or from central finite
differences of the same frozen-governor replay.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .simulation import run_closed_loop, task_times

SENSITIVITY = "sensitivity"
FINITE_DIFFERENCE = "finite-difference"
BOTH = "both"
ALPHA_MIN = 1e-8


def loss_mask(t, t_a):
    t = np.asarray(t, dtype=float)
    if t_a is None:
        return np.ones(t.size, dtype=bool)
    return t <= t_a + 1e-9


def loss(log, t_a=None):
    """``sum_k |y_k - g_k|^2 dt`` over samples with ``t_k <= t_a``.

    ``t_a=None`` (task not completed) sums over the whole log.
    """
    err = np.asarray(log.y) - np.asarray(log.g)
    return float(np.sum(np.sum(err ** 2, axis=1)[loss_mask(log.t, t_a)]) * log.dt)


def _hold_input(plant, z, g):
    return plant.K @ (z - plant.equilibrium(g))


def sensitivity_step(S, z, g, plant, dt):
    """One sampled-data step of the plant and of ``S = dz/dtheta``.

    The plant input ``u = K (z - xbar_g)`` is held over the step, as in the
    simulation, so its sensitivity ``U = K S + dK/dtheta (z - xbar_g)`` is
    held too and ``S' = A S + B U`` is integrated by the same RK4 stages
    as ``z' = A z + B u``.  Returns ``(z_next, S_next)``.
    """
    A, B = plant.A, plant.B
    e = z - plant.equilibrium(g)
    u = plant.K @ e
    U = plant.K @ S + np.stack([dK @ e for dK in plant.dK_dtheta], axis=1)

    def rhs(w):
        zz, SS = w
        return A @ zz + B @ u, A @ SS + B @ U

    w0 = (np.asarray(z, float), np.asarray(S, float))
    k1 = rhs(w0)
    k2 = rhs(tuple(a + 0.5 * dt * b for a, b in zip(w0, k1)))
    k3 = rhs(tuple(a + 0.5 * dt * b for a, b in zip(w0, k2)))
    k4 = rhs(tuple(a + dt * b for a, b in zip(w0, k3)))
    return tuple(a + dt / 6.0 * (p + 2 * q + 2 * r + s) for a, p, q, r, s in zip(w0, k1, k2, k3, k4))


def replay(plant, z0, g_path, dt):
    """Re-run the plant along a fixed governor path ``g_path`` (one row per sample).

    The step from sample ``k`` to ``k + 1`` tracks ``g_path[k + 1]``,
    matching the simulation loop.  Returns the sampled outputs.
    """
    if hasattr(plant, "reset"):
        plant.reset()
    z = np.asarray(z0, dtype=float)
    ys = [plant.output(z)]
    for k in range(len(g_path) - 1):
        z, _ = plant.advance(z, g_path[k + 1], k * dt, dt)
        ys.append(plant.output(z))
    return np.array(ys)


def replay_with_sensitivity(plant, z0, g_path, dt):
    """Outputs and output sensitivities ``C S_k`` along a fixed governor path."""
    z = np.asarray(z0, dtype=float)
    S = np.zeros((z.size, len(plant.dK_dtheta)))
    C = plant.C
    ys, dys = [C @ z], [C @ S]
    for k in range(len(g_path) - 1):
        z, S = sensitivity_step(S, z, g_path[k + 1], plant, dt)
        ys.append(C @ z)
        dys.append(C @ S)
    return np.array(ys), np.array(dys)


def _frozen_inputs(sc, log):
    return sc.agent_position, np.asarray(log.g), log.dt, np.asarray(log.t)


def frozen_loss(sc, theta, log, t_a):
    """Loss of gains ``theta`` replayed along ``log``'s governor path."""
    x0, g_path, dt, t = _frozen_inputs(sc, log)
    plant = sc.make_plant(theta, check=False)
    y = replay(plant, plant.initial_state(x0), g_path, dt)
    err = y - g_path
    return float(np.sum(np.sum(err ** 2, axis=1)[loss_mask(t, t_a)]) * dt)


def sensitivity_grad(sc, theta, log, t_a):
    """``dL/dtheta = sum_k 2 (C z_k - g_k)' C S_k dt`` on the frozen replay."""
    x0, g_path, dt, t = _frozen_inputs(sc, log)
    plant = sc.make_plant(theta, check=False)
    if not hasattr(plant, "dK_dtheta"):
        raise TypeError(f"{plant.name} has no linear gain structure; use finite differences")
    y, dy = replay_with_sensitivity(plant, plant.initial_state(x0), g_path, dt)
    mask = loss_mask(t, t_a)
    err = (y - g_path)[mask]
    return 2.0 * dt * np.einsum("ki,kij->j", err, dy[mask])


def central_difference(fun, theta, delta=1e-4):
    """Central-difference gradient of a scalar function."""
    theta = np.asarray(theta, dtype=float)
    if delta <= 0:
        raise ValueError("delta must be positive")
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = delta
        grad[i] = (fun(theta + e) - fun(theta - e)) / (2.0 * delta)
    return grad


def finite_diff_grad(sc, theta, delta=1e-4, log=None, t_a=None):
    """Central differences of the loss in ``theta``.

    With ``log`` the governor path is frozen to the logged one (the oracle
    for :func:`sensitivity_grad`); without it every evaluation is a full
    closed-loop re-simulation scored over ``[0, t_a]``.
    """
    if log is not None:
        return central_difference(lambda th: frozen_loss(sc, th, log, t_a), theta, delta)
    return central_difference(lambda th: loss(run_closed_loop(sc, th), t_a), theta, delta)


def is_stabilizing(sc, theta):
    try:
        plant = sc.make_plant(theta, check=False)
    except ValueError:
        return False
    return linalg.is_hurwitz(plant.A_cl)


@dataclass
class TuningRecord:
    iteration: int
    theta: np.ndarray
    loss: float
    t_g: float
    t_a: float
    mean_delta: float
    min_delta: float
    alpha: float
    complete: bool
    grad: np.ndarray = None
    grad_check: float = None

    @property
    def gap(self):
        if self.t_g is None or self.t_a is None:
            return None
        return abs(self.t_g - self.t_a)


@dataclass
class TuningRun:
    records: list = field(default_factory=list)
    stalled: bool = False
    message: str = ""
    theta_names: tuple = ("k_p", "k_d")

    @property
    def theta_history(self):
        return [r.theta for r in self.records]

    @property
    def loss_history(self):
        return [r.loss for r in self.records]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", *self.theta_names, "loss", "t_g", "t_a", "abs_gap", "mean_delta",
                    "min_delta", "alpha", "complete", "grad_rel_diff"])
        for r in self.records:
            w.writerow([r.iteration, *(repr(float(v)) for v in r.theta), repr(r.loss), _opt(r.t_g),
                        _opt(r.t_a), _opt(r.gap), repr(r.mean_delta), repr(r.min_delta), repr(r.alpha),
                        int(r.complete), _opt(r.grad_check)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _opt(v):
    return "" if v is None else repr(float(v))


def _names(sc):
    return ("k_x", "k_v") if sc.plant == "quadrotor" else ("k_p", "k_d")


def evaluate(sc, theta):
    """Closed-loop run at ``theta`` -> ``(log, record)`` with iteration/alpha unset."""
    log = run_closed_loop(sc, theta)
    t_g, t_a = task_times(log, sc.formula, "witnessed")
    delta = log.delta[np.isfinite(log.delta)]
    rec = TuningRecord(-1, np.array(theta, float), loss(log, t_a), t_g, t_a,
                       float(np.mean(delta)) if delta.size else np.inf,
                       float(np.min(delta)) if delta.size else np.inf, np.nan, t_a is not None)
    return log, rec


def gradient_agreement(g_sens, g_fd, abs_floor=1e-6):
    """Largest per-component relative difference, with an absolute floor."""
    g_sens, g_fd = np.asarray(g_sens, float), np.asarray(g_fd, float)
    scale = np.maximum(np.abs(g_fd), abs_floor)
    return float(np.max(np.abs(g_sens - g_fd) / scale))


def tune(sc, iterations=None, step_size=None, grad_oracle=None, fd_delta=1e-4, theta0=None, progress=None,
         check_gradient=False):
    """Gradient descent ``theta <- theta - alpha dL/dtheta`` on the tracking gains.

    With ``check_gradient`` both oracles are evaluated every iteration and
    their relative disagreement is recorded; the step uses ``grad_oracle``.
    A step that would make the closed loop non-Hurwitz is rejected and
    ``alpha`` halved; if ``alpha`` falls below 1e-8 the run stops with
    ``stalled=True`` and the history so far.  ``progress`` is called with
    each :class:`TuningRecord`.
    """
    cfg = sc.tuning or {}
    iterations = int(cfg.get("iterations", 20) if iterations is None else iterations)
    alpha = float(cfg.get("step_size", 1e-3) if step_size is None else step_size)
    if iterations < 0 or alpha < 0:
        raise ValueError("iterations and step size must be nonnegative")
    if grad_oracle is None:
        grad_oracle = SENSITIVITY if sc.plant == "double_integrator" else FINITE_DIFFERENCE
    if grad_oracle not in (SENSITIVITY, FINITE_DIFFERENCE):
        raise ValueError(f"unknown gradient oracle {grad_oracle!r}")
    theta = np.array(sc.make_plant().theta if theta0 is None else theta0, dtype=float)
    if not is_stabilizing(sc, theta):
        raise ValueError("initial gains do not stabilise the closed loop")
    run = TuningRun(theta_names=_names(sc))
    for it in range(iterations + 1):
        log, rec = evaluate(sc, theta)
        rec.iteration, rec.alpha = it, alpha
        run.records.append(rec)
        if it == iterations:
            if progress:
                progress(rec)
            break
        if grad_oracle == SENSITIVITY or check_gradient:
            g_sens = sensitivity_grad(sc, theta, log, rec.t_a)
        if grad_oracle == FINITE_DIFFERENCE or check_gradient:
            g_fd = finite_diff_grad(sc, theta, fd_delta, log=log, t_a=rec.t_a)
        grad = g_sens if grad_oracle == SENSITIVITY else g_fd
        if check_gradient:
            rec.grad_check = gradient_agreement(g_sens, g_fd)
        rec.grad = grad
        if progress:
            progress(rec)
        cand = theta - alpha * grad
        while not is_stabilizing(sc, cand):
            alpha *= 0.5
            if alpha < ALPHA_MIN:
                run.stalled = True
                run.message = f"step size fell below {ALPHA_MIN:g} at iteration {it}"
                return run
            cand = theta - alpha * grad
        theta = cand
    return run
