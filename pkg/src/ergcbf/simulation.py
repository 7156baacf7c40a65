"""Fixed-step closed-loop simulation of governor + tracked plant."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .governor import Governor, GovernorState, effective_margin, governor_update
from .plants import DoubleIntegratorState, NumericalFailure, hocbf_controller, rk4_step
from .plants.double_integrator import DoubleIntegratorGains
from .stl import Signal, compile_barrier, completion_time, robustness
from .world import distance_to_unsafe

CSV_VERSION = "ergcbf-trajectory v1"


class SimulationFailure(RuntimeError):
    def __init__(self, message, step=None, dump=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step
        self.dump = dump or {}


@dataclass
class TrajectoryLog:
    """Per-step record; row ``k`` is the state at ``t[k]`` and the inputs applied on ``[t[k], t[k+1])``."""

    dt: float
    t: np.ndarray
    state: np.ndarray
    y: np.ndarray
    g: np.ndarray
    delta: np.ndarray
    u_g: np.ndarray
    u_plant: np.ndarray
    b_stl: np.ndarray
    barriers: dict
    clearance_g: np.ndarray
    clearance_y: np.ndarray
    qp_status: list
    slack: np.ndarray
    active: list
    qp_iterations: np.ndarray
    plant: str = ""
    t_star: dict = field(default_factory=dict)
    gamma0: dict = field(default_factory=dict)
    failure: str = None

    def __len__(self):
        return self.t.size

    def signal(self, which="g"):
        return Signal(self.g if which == "g" else self.y, self.dt, float(self.t[0]))

    def columns(self):
        n, p = self.state.shape[1], self.g.shape[1]
        m = self.u_plant.shape[1]
        axes = "xyz"[:p]
        cols = ["t"] + [f"state_{i}" for i in range(n)] + [f"y_{a}" for a in axes] + [f"g_{a}" for a in axes]
        cols += ["delta"] + [f"u_g_{a}" for a in axes] + [f"u_plant_{i}" for i in range(m)]
        cols += ["b_stl"] + [f"b[{k}]" for k in self.barriers] + ["clearance_g", "clearance_y"]
        cols += ["qp_status", "slack", "qp_iterations", "active_set"]
        return cols

    def to_csv(self, path=None):
        buf = io.StringIO()
        buf.write(f"# {CSV_VERSION}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        bars = list(self.barriers.values())
        for k in range(len(self)):
            row = [self.t[k], *self.state[k], *self.y[k], *self.g[k], self.delta[k], *self.u_g[k],
                   *self.u_plant[k], self.b_stl[k], *(b[k] for b in bars), self.clearance_g[k],
                   self.clearance_y[k]]
            row = [_fmt(v) for v in row]
            row += [self.qp_status[k], _fmt(self.slack[k]), int(self.qp_iterations[k]),
                    ";".join(str(i) for i in self.active[k])]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(v):
    return repr(float(v))


class _Recorder:
    def __init__(self, n, plant, labels):
        self.rows = {k: [] for k in ("t", "state", "y", "g", "delta", "u_g", "u_plant", "b_stl",
                                     "clearance_g", "clearance_y", "qp_status", "slack", "active",
                                     "qp_iterations")}
        self.barriers = {lab: [] for lab in labels}

    def add(self, **kw):
        for k, v in kw.items():
            self.rows[k].append(v)


def _build(sc, theta=None):
    plant = sc.make_plant(theta)
    if hasattr(plant, "reset"):
        plant.reset()
    env = sc.planning_environment()
    barrier = compile_barrier(sc.formula, sc.governor_position, sc.t_star, sc.smoothing)
    gov = Governor(env, barrier, plant.P, plant.l, sc.governor)
    return plant, env, barrier, gov


def run_closed_loop(sc, theta=None, rate_hz=None, on_failure="raise"):
    """Simulate governor and plant over the scenario horizon.

    Per step: safety margin -> barrier evaluation -> navigation QP ->
    governor Euler step -> plant control -> RK4 plant step -> log.
    With ``on_failure="log"`` a hard failure truncates the log and sets
    ``failure`` instead of raising.
    """
    if rate_hz is not None:
        sc = sc.with_overrides(rate_hz=rate_hz)
    plant, env, barrier, gov = _build(sc, theta)
    dt = sc.dt
    n_steps = sc.n_steps
    z = plant.initial_state(sc.agent_position)
    state = GovernorState(np.asarray(sc.governor_position, float).copy(), 0.0, 0.0)
    labels = [c.label for c in barrier.components]
    rec = _Recorder(n_steps + 1, plant, labels)
    m_plant = 4 if plant.name == "quadrotor" else plant.dim
    failure = None

    for k in range(n_steps + 1):
        t = k * dt
        state.t = t
        xt = plant.tracking_state(z)
        y = plant.output(z)
        try:
            delta = gov.margin(xt, state.g)
            u_g, diag = gov.solve_field(state.g, t, delta, dt)
        except Exception as exc:  # noqa: BLE001 - annotate and re-raise / record
            failure = f"step {k}: {exc}"
            if on_failure == "raise":
                raise SimulationFailure(str(exc), k, getattr(exc, "dump", None)) from exc
            break
        comp = barrier.component_values(state.g, t)
        rec.add(t=t, state=z.copy(), y=y.copy(), g=state.g.copy(), delta=delta, u_g=u_g.copy(),
                b_stl=diag.b_stl, clearance_g=distance_to_unsafe(state.g, env),
                clearance_y=distance_to_unsafe(y, sc.environment),
                qp_status=("relaxed" if diag.relaxed else diag.status), slack=diag.slack,
                active=diag.active, qp_iterations=diag.iterations)
        for lab in labels:
            rec.barriers[lab].append(comp[lab])
        if k == n_steps:
            rec.add(u_plant=np.full(m_plant, np.nan))
            break
        g_next = governor_update(state.g, effective_margin(delta, gov.cfg), u_g, dt)
        try:
            z, u_plant = plant.advance(z, g_next, t, dt)
        except (NumericalFailure, RuntimeError, ValueError) as exc:
            failure = f"step {k}: {exc}"
            rec.add(u_plant=np.full(m_plant, np.nan))
            if on_failure == "raise":
                raise SimulationFailure(str(exc), k, {"state": z.tolist(), "g": state.g.tolist()}) from exc
            break
        rec.add(u_plant=np.asarray(u_plant, float))
        state = GovernorState(g_next, delta, t + dt, diag)

    rows = rec.rows
    gamma0 = {c.label: c.gamma0 for c in barrier.components}
    return TrajectoryLog(
        dt=dt,
        t=np.array(rows["t"]),
        state=np.array(rows["state"]),
        y=np.array(rows["y"]),
        g=np.array(rows["g"]),
        delta=np.array(rows["delta"]),
        u_g=np.array(rows["u_g"]),
        u_plant=np.array(rows["u_plant"]),
        b_stl=np.array(rows["b_stl"]),
        barriers={lab: np.array(v) for lab, v in rec.barriers.items()},
        clearance_g=np.array(rows["clearance_g"]),
        clearance_y=np.array(rows["clearance_y"]),
        qp_status=rows["qp_status"],
        slack=np.array(rows["slack"]),
        active=rows["active"],
        qp_iterations=np.array(rows["qp_iterations"]),
        plant=plant.name,
        t_star=dict(barrier.t_star),
        gamma0=gamma0,
        failure=failure,
    )


def task_times(log, formula, mode="witnessed"):
    """Completion times ``(t_g, t_a)`` of governor and agent (None if unmet)."""
    try:
        t_g = completion_time(log.signal("g"), formula, mode)
        t_a = completion_time(log.signal("y"), formula, mode)
    except ValueError:
        return None, None
    return t_g, t_a


def summarize(log, sc, mode="witnessed"):
    """Flat metrics dictionary for a closed-loop log."""
    t_g, t_a = task_times(log, sc.formula, mode)
    try:
        rho_g = robustness(log.signal("g"), sc.formula)
        rho_y = robustness(log.signal("y"), sc.formula)
    except ValueError:
        rho_g = rho_y = float("nan")
    finite = np.isfinite(log.delta)
    delta = log.delta[finite] if finite.any() else np.array([np.inf])
    status = np.array(log.qp_status)
    return {
        "scenario": sc.name,
        "plant": log.plant,
        "steps": int(len(log)),
        "t_g": t_g,
        "t_a": t_a,
        "completion_mode": mode,
        "robustness_g": _num(rho_g),
        "robustness_y": _num(rho_y),
        "min_delta": _num(np.min(delta)),
        "mean_delta": _num(np.mean(delta)),
        "min_clearance_g": _num(np.min(log.clearance_g)),
        "min_clearance_y": _num(np.min(log.clearance_y)),
        "qp_solves": int(len(status)),
        "qp_relaxed": int(np.sum(status == "relaxed")),
        "qp_max_slack": _num(np.max(log.slack) if len(log.slack) else 0.0),
        "qp_mean_iterations": _num(np.mean(log.qp_iterations) if len(log) else 0.0),
        "t_star": {k: float(v) for k, v in log.t_star.items()},
        "gamma0": {k: float(v) for k, v in log.gamma0.items()},
        "failure": log.failure,
    }


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


@dataclass
class HocbfLog:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    u: np.ndarray
    feasible: np.ndarray
    target_index: np.ndarray
    reached: dict
    kappa: tuple


def run_hocbf(sc, k1=None, k2=None, targets=None, u_max=None):
    """Double integrator driven straight at each target through the HOCBF filter.

    The target advances to the next region once the current one is entered.
    ``reached`` maps region name -> first entry time (or None).
    """
    if sc.plant != "double_integrator":
        raise ValueError("the HOCBF baseline is defined for the double integrator")
    cfg = sc.hocbf
    k1 = float(cfg.get("kappa1", 1.0) if k1 is None else k1)
    k2 = float(cfg.get("kappa2", 1.0) if k2 is None else k2)
    targets = list(targets or cfg.get("targets") or [n for n, p in sc.regions.items() if p.kind == "reach"])
    u_max = cfg.get("u_max") if u_max is None else u_max
    gains = DoubleIntegratorGains(float(sc.gains.get("k_p", -6.0)), float(sc.gains.get("k_d", -4.0)))
    plant = sc.make_plant()
    env = sc.environment
    dt = sc.dt
    z = plant.initial_state(sc.agent_position)
    reached = {name: None for name in targets}
    idx = 0
    ts, xs, vs, us, feas, tid = [], [], [], [], [], []
    for k in range(sc.n_steps + 1):
        t = k * dt
        s = DoubleIntegratorState.from_vector(z, plant.dim)
        while idx < len(targets) and sc.regions[targets[idx]].value(s.x) >= 0:
            reached[targets[idx]] = t
            idx += 1
        goal = sc.regions[targets[min(idx, len(targets) - 1)]].center
        res = hocbf_controller(s, goal, env, k1, k2, gains, u_max)
        ts.append(t)
        xs.append(s.x)
        vs.append(s.v)
        us.append(res.u)
        feas.append(res.feasible)
        tid.append(idx)
        if k < sc.n_steps:
            z = rk4_step(plant.dynamics, z, res.u, dt)
    return HocbfLog(np.array(ts), np.array(xs), np.array(vs), np.array(us), np.array(feas),
                    np.array(tid), reached, (k1, k2))


def erg_reached(log, sc, targets):
    """First time the agent output enters each region (None if never)."""
    out = {}
    for name in targets:
        inside = np.flatnonzero(sc.regions[name].value(log.y) >= 0)
        out[name] = float(log.t[inside[0]]) if inside.size else None
    return out
