"""Static report figures.

Figures are built on :class:`matplotlib.figure.Figure` directly, so the Agg
canvas is used and no global pyplot state or display is touched.
"""

import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Circle


def _save(fig, path):
    fig.savefig(path, dpi=110, bbox_inches="tight")
    return path


def _planar_layout(ax, sc):
    env = sc.environment
    if env.has_arena:
        ax.add_patch(Circle(env.arena_center, env.arena_radius, fill=False, ls="--", color="0.4"))
    for o in env.obstacles:
        ax.add_patch(Circle(o.center, o.radius, color="0.3", alpha=0.5))
    for name, pred in sc.regions.items():
        if pred.kind == "reach":
            ax.add_patch(Circle(pred.center, pred.radius, color="tab:green", alpha=0.25))
            ax.annotate(name, pred.center, ha="center", va="center", fontsize=8)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def _sphere(ax, center, radius, **kw):
    u, v = np.mgrid[0:2 * np.pi:16j, 0:np.pi:9j]
    ax.plot_wireframe(center[0] + radius * np.cos(u) * np.sin(v), center[1] + radius * np.sin(u) * np.sin(v),
                      center[2] + radius * np.cos(v), linewidth=0.4, **kw)


def trajectory_figure(log, sc, path):
    """Governor and agent paths over the scenario layout."""
    fig = Figure(figsize=(6.5, 6))
    if log.g.shape[1] == 3:
        ax = fig.add_subplot(projection="3d")
        for o in sc.environment.obstacles:
            _sphere(ax, o.center, o.radius, color="0.3")
        for pred in sc.regions.values():
            if pred.kind == "reach":
                _sphere(ax, pred.center, pred.radius, color="tab:green")
        ax.plot(*log.g.T, color="tab:blue", label="governor g")
        ax.plot(*log.y.T, color="tab:red", ls="--", label="agent y")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_zlabel("z [m]")
    else:
        ax = fig.add_subplot()
        _planar_layout(ax, sc)
        ax.plot(*log.g.T, color="tab:blue", label="governor g")
        ax.plot(*log.y.T, color="tab:red", ls="--", label="agent y")
        ax.plot(*log.y[0], "ko", ms=4)
    ax.legend(loc="best", fontsize=8)
    ax.set_title(sc.name)
    return _save(fig, path)


def margin_figure(log, path):
    """Safety margin, STL barrier and clearances against time."""
    fig = Figure(figsize=(7, 6))
    ax1, ax2, ax3 = fig.subplots(3, 1, sharex=True)
    ax1.plot(log.t, log.delta, color="tab:purple")
    ax1.axhline(0.0, color="k", lw=0.6)
    ax1.set_ylabel("DSM")
    ax2.plot(log.t, log.b_stl, color="k", label="smooth conjunction")
    for lab, b in log.barriers.items():
        ax2.plot(log.t, b, lw=0.8, label=lab)
    ax2.axhline(0.0, color="k", lw=0.6)
    ax2.set_ylabel("STL barrier")
    ax2.legend(fontsize=7)
    ax3.plot(log.t, log.clearance_g, label="governor")
    ax3.plot(log.t, log.clearance_y, ls="--", label="agent")
    ax3.axhline(0.0, color="k", lw=0.6)
    ax3.set_ylabel("clearance [m]")
    ax3.set_xlabel("t [s]")
    ax3.legend(fontsize=7)
    return _save(fig, path)


def comparison_figure(log, hocbf_logs, sc, path):
    """ERG-guided run next to HOCBF runs (one per gain pair)."""
    fig = Figure(figsize=(6.5, 6))
    ax = fig.add_subplot()
    _planar_layout(ax, sc)
    ax.plot(*log.y.T, color="tab:red", label="ERG-guided CBF")
    for h in hocbf_logs:
        ax.plot(*h.x.T, lw=1.0, label=f"HOCBF k1={h.kappa[0]:g}, k2={h.kappa[1]:g}")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def tuning_figure(run, path):
    """Loss, mean DSM and completion times per iteration."""
    it = [r.iteration for r in run.records]
    fig = Figure(figsize=(9, 3))
    ax1, ax2, ax3 = fig.subplots(1, 3)
    ax1.plot(it, run.loss_history, "o-", ms=3)
    ax1.set_title("loss")
    ax2.plot(it, [r.mean_delta for r in run.records], "o-", ms=3)
    ax2.set_title("mean DSM")
    nan = float("nan")
    ax3.plot(it, [nan if r.t_g is None else r.t_g for r in run.records], "o-", ms=3, label="t_g")
    ax3.plot(it, [nan if r.t_a is None else r.t_a for r in run.records], "s-", ms=3, label="t_a")
    ax3.set_title("completion time [s]")
    ax3.legend(fontsize=7)
    for ax in (ax1, ax2, ax3):
        ax.set_xlabel("iteration")
    fig.tight_layout()
    return _save(fig, path)
