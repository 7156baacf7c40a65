"""Command-line front end: ``ergcbf run | compare | tune | validate``."""

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import linalg
from .governor import dsm
from .plants import headway_input_coefficients, relative_degree
from .scenario import ScenarioError, load_scenario
from .simulation import SimulationFailure, erg_reached, run_closed_loop, run_hocbf, summarize
from .stl import compile_barrier

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INCOMPLETE = 2
EXIT_STALL = 3
EXIT_CONFIG = 64

OUT_ENV = "ERGCBF_OUT"
SAFETY_TOL = 1e-6


def resolve_scenario(ref):
    """A scenario path, or the name of a shipped scenario (``double_integrator``)."""
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    shipped = resources.files("ergcbf") / "scenarios"
    for suffix in ("", ".scenario", ".fixture"):
        cand = shipped / f"{ref}{suffix}"
        if cand.is_file():
            with resources.as_file(cand) as p:
                return load_scenario(p)
    raise ScenarioError(f"no scenario file or shipped scenario named {ref!r}")


def shipped_scenarios():
    shipped = resources.files("ergcbf") / "scenarios"
    return sorted(p.name for p in shipped.iterdir() if p.name.endswith((".scenario", ".fixture")))


def _out_dir(args, sc):
    base = args.out or os.environ.get(OUT_ENV) or "ergcbf-out"
    out = Path(base)
    if args.out is None:
        out = out / sc.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=False, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _apply_overrides(sc, args):
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "rate_hz", None) is not None:
        if not args.rate_hz > 0:
            raise ScenarioError("must be positive", "rate_hz")
        updates["rate_hz"] = args.rate_hz
    return sc.with_overrides(**updates) if updates else sc


def validate_scenario(sc):
    """List of ``(check, ok, detail)`` for a parsed scenario."""
    checks = []
    if sc.plant == "acc":
        a = sc.acc
        first, second = headway_input_coefficients(a["lead_speed_mps"], a["min_headway_m"],
                                                   (a["headway_m"], a["ego_speed_mps"]))
        rd = relative_degree(a["lead_speed_mps"], a["min_headway_m"], (a["headway_m"], a["ego_speed_mps"]))
        checks.append(("headway barrier has relative degree 2", rd == 2,
                       f"input coefficients {first:.3g} (first), {second:.3g} (second)"))
        checks.append(("initial headway above minimum", a["headway_m"] > a["min_headway_m"],
                       f"d = {a['headway_m']:g} m, d_min = {a['min_headway_m']:g} m"))
        return checks

    plant = sc.make_plant(check=False)
    abscissa = linalg.spectral_abscissa(plant.A_cl)
    stable = abscissa < 0
    checks.append(("closed-loop gains are Hurwitz", stable, f"max Re(eig) = {abscissa:.4g}"))
    if stable:
        env = sc.planning_environment()
        x0 = plant.tracking_state(plant.initial_state(sc.agent_position))
        d0 = dsm(x0, sc.governor_position, plant.P, plant.l, env)
        checks.append(("initial safety margin positive", d0 > 0, f"DSM(x0, g0) = {d0:.4g}"))
    try:
        barrier = compile_barrier(sc.formula, sc.governor_position, sc.t_star, sc.smoothing)
    except ValueError as exc:
        checks.append(("STL barrier compiles", False, str(exc)))
    else:
        if barrier.active(0.0):
            b0 = barrier.value(sc.governor_position, 0.0)
            checks.append(("STL barrier initially positive", b0 > 0, f"b(g0, 0) = {b0:.4g}"))
        else:
            checks.append(("STL barrier initially positive", True, "no active task at t = 0"))
    return checks


def _report_checks(checks, stream=None):
    stream = stream or sys.stdout
    for name, ok, detail in checks:
        print(f"[{'ok' if ok else 'FAIL'}] {name}: {detail}", file=stream)
    return all(ok for _, ok, _ in checks)


def _precheck(sc):
    checks = validate_scenario(sc)
    bad = [c for c in checks if not c[1]]
    if bad:
        _report_checks(bad, sys.stderr)
        return False
    return True


def _reach_targets(sc):
    return [n for n, p in sc.regions.items() if p.kind == "reach"]


def cmd_run(args):
    sc = _apply_overrides(resolve_scenario(args.scenario), args)
    out = _out_dir(args, sc)
    if sc.plant == "acc":
        checks = validate_scenario(sc)
        ok = _report_checks(checks)
        _write_json(out / "metrics.json", {"scenario": sc.name, "plant": "acc",
                                           "checks": [{"check": c, "ok": o, "detail": d} for c, o, d in checks]})
        return EXIT_OK if ok else EXIT_FAILURE
    if not _precheck(sc):
        return EXIT_CONFIG
    log = run_closed_loop(sc, on_failure="log")
    log.to_csv(out / "trajectory.csv")
    metrics = summarize(log, sc, args.completion)
    metrics["seed"] = sc.seed
    metrics["rate_hz"] = sc.rate_hz
    metrics["reached"] = erg_reached(log, sc, _reach_targets(sc))
    safe = ((metrics["min_delta"] is None or metrics["min_delta"] >= -SAFETY_TOL)
            and (metrics["min_clearance_y"] is None or metrics["min_clearance_y"] >= -SAFETY_TOL))
    rho = metrics["robustness_y"]
    # an empty task has infinite robustness, reported as null
    trivial = rho is None and metrics["t_a"] == 0.0
    done = metrics["t_a"] is not None and (trivial or (rho is not None and rho > 0))
    if log.failure is not None or not safe:
        code = EXIT_FAILURE
    else:
        code = EXIT_OK if done else EXIT_INCOMPLETE
    metrics["exit_code"] = code
    _write_json(out / "metrics.json", metrics)
    if not args.no_figures and len(log) > 1:
        from . import plotting

        plotting.trajectory_figure(log, sc, out / "trajectory.png")
        plotting.margin_figure(log, out / "margins.png")
    print(f"{sc.name}: t_g={metrics['t_g']} t_a={metrics['t_a']} robustness_g={metrics['robustness_g']} "
          f"min_delta={metrics['min_delta']} relaxed={metrics['qp_relaxed']}")
    if log.failure:
        print(f"hard failure: {log.failure}", file=sys.stderr)
    print(f"wrote {out}")
    return code


def _hocbf_csv(h, path):
    p = h.x.shape[1]
    axes = "xyz"[:p]
    cols = ["t"] + [f"x_{a}" for a in axes] + [f"v_{a}" for a in axes] + [f"u_{a}" for a in axes]
    cols += ["feasible", "target_index"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(h.t.size):
            vals = [h.t[k], *h.x[k], *h.v[k], *h.u[k]]
            fh.write(",".join(repr(float(v)) for v in vals) + f",{int(h.feasible[k])},{int(h.target_index[k])}\n")


def cmd_compare(args):
    sc = _apply_overrides(resolve_scenario(args.scenario), args)
    if sc.plant != "double_integrator":
        print("compare needs a double_integrator scenario", file=sys.stderr)
        return EXIT_CONFIG
    if not _precheck(sc):
        return EXIT_CONFIG
    out = _out_dir(args, sc)
    targets = list(sc.hocbf.get("targets") or _reach_targets(sc))
    kappas = args.kappa or [float(sc.hocbf.get("kappa1", 1.0))]
    log = run_closed_loop(sc, on_failure="log")
    log.to_csv(out / "trajectory.csv")
    verdict = {"targets": targets, "erg": erg_reached(log, sc, targets), "hocbf": {}}
    hlogs = []
    for k in kappas:
        h = run_hocbf(sc, k, k, targets)
        hlogs.append(h)
        verdict["hocbf"][f"kappa={k:g}"] = {"reached": h.reached, "infeasible_steps": int(np.sum(~h.feasible)),
                                             "final_position": h.x[-1].tolist()}
        _hocbf_csv(h, out / f"hocbf_kappa{k:g}.csv")
    _write_json(out / "verdict.json", verdict)
    if not args.no_figures:
        from . import plotting

        plotting.comparison_figure(log, hlogs, sc, out / "comparison.png")

    def mark(t):
        return "not reached" if t is None else f"reached at {t:.2f} s"

    print(f"{'controller':<18}" + "".join(f"{t:<24}" for t in targets))
    print(f"{'ERG-guided CBF':<18}" + "".join(f"{mark(verdict['erg'][t]):<24}" for t in targets))
    for k, h in zip(kappas, hlogs):
        print(f"{f'HOCBF k={k:g}':<18}" + "".join(f"{mark(h.reached[t]):<24}" for t in targets))
    print(f"wrote {out}")
    return EXIT_FAILURE if log.failure else EXIT_OK


def cmd_tune(args):
    from .tuning import BOTH, SENSITIVITY, tune

    sc = _apply_overrides(resolve_scenario(args.scenario), args)
    if sc.plant == "acc":
        print("the acc fixture has no tunable closed loop", file=sys.stderr)
        return EXIT_CONFIG
    if not _precheck(sc):
        return EXIT_CONFIG
    out = _out_dir(args, sc)
    oracle = args.grad_oracle
    if oracle in (SENSITIVITY, BOTH) and sc.plant != "double_integrator":
        print(f"{oracle} gradients need a linear closed loop; use finite-difference", file=sys.stderr)
        return EXIT_CONFIG

    def progress(rec):
        gap = "-" if rec.gap is None else f"{rec.gap:.3f}"
        extra = "" if rec.grad_check is None else f" grad_rel_diff={rec.grad_check:.2e}"
        print(f"iter {rec.iteration:3d} theta={np.round(rec.theta, 4).tolist()} loss={rec.loss:.5g} "
              f"mean_delta={rec.mean_delta:.4g} |t_g-t_a|={gap}{extra}", flush=True)

    run = tune(sc, iterations=args.iterations, step_size=args.alpha,
               grad_oracle=SENSITIVITY if oracle == BOTH else oracle, progress=progress,
               check_gradient=oracle == BOTH)
    run.to_csv(out / "tuning.csv")
    first, last = run.records[0], run.records[-1]
    summary = {
        "scenario": sc.name,
        "gradient_oracle": oracle,
        "iterations": len(run.records) - 1,
        "initial_gains": dict(zip(run.theta_names, first.theta.tolist())),
        "final_gains": dict(zip(run.theta_names, last.theta.tolist())),
        "initial_loss": first.loss,
        "final_loss": last.loss,
        "stalled": run.stalled,
        "message": run.message,
    }
    checks = [r.grad_check for r in run.records if r.grad_check is not None]
    if checks:
        summary["max_grad_rel_diff"] = max(checks)
    if not args.no_figures:
        from . import plotting

        plotting.tuning_figure(run, out / "tuning.png")
    if run.stalled:
        code = EXIT_STALL
        print(f"tuning stalled: {run.message}", file=sys.stderr)
    elif len(run.records) == 1:
        code = EXIT_OK
        print("no-op: zero iterations, gains unchanged")
    else:
        code = EXIT_OK if last.loss < first.loss else EXIT_INCOMPLETE
    summary["exit_code"] = code
    _write_json(out / "gains.json", summary)
    print(f"wrote {out}")
    return code


def cmd_validate(args):
    sc = _apply_overrides(resolve_scenario(args.scenario), args)
    print(f"scenario {sc.name} ({sc.plant})")
    return EXIT_OK if _report_checks(validate_scenario(sc)) else EXIT_FAILURE


def build_parser():
    from .tuning import BOTH, FINITE_DIFFERENCE, SENSITIVITY

    parser = argparse.ArgumentParser(prog="ergcbf", description="Reference-governor-guided CBF navigation for STL tasks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, outputs=True):
        p.add_argument("scenario", help="scenario file, or the name of a shipped scenario")
        p.add_argument("--rate-hz", type=float, help="override the simulation rate")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        if outputs:
            p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name> or ./ergcbf-out/<name>)")
            p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    p = sub.add_parser("run", help="simulate one scenario")
    common(p)
    p.add_argument("--completion", choices=("witnessed", "determined"), default="witnessed",
                   help="how task-completion times are read off the trajectory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="ERG-guided CBF against the HOCBF baseline")
    common(p)
    p.add_argument("--kappa", type=float, action="append",
                   help="HOCBF gain used for both kappa1 and kappa2 (repeatable)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("tune", help="gradient tuning of the tracking gains")
    common(p)
    p.add_argument("--iterations", type=int, help="number of gradient steps")
    p.add_argument("--alpha", type=float, help="step size")
    p.add_argument("--grad-oracle", choices=(SENSITIVITY, FINITE_DIFFERENCE, BOTH), default=None,
                   help="gradient source; 'both' steps with sensitivities and reports agreement")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("validate", help="check a scenario without simulating")
    common(p, outputs=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which would read as "incomplete"
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        if args.command == "tune" and args.grad_oracle is None:
            sc = resolve_scenario(args.scenario)
            args.grad_oracle = "sensitivity" if sc.plant == "double_integrator" else "finite-difference"
        if getattr(args, "iterations", None) is not None and args.iterations < 0:
            raise ScenarioError("must be nonnegative", "--iterations")
        if getattr(args, "alpha", None) is not None and args.alpha < 0:
            raise ScenarioError("must be nonnegative", "--alpha")
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFailure as exc:
        print(f"hard failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
