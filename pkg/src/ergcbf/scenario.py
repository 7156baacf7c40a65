"""Scenario files: a YAML document with units spelled out in the field names."""

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .governor import GovernorConfig
from .plants import DoubleIntegrator, DoubleIntegratorGains, Quadrotor, QuadrotorParams
from .stl import HALFSPACE, Predicate, parse_stl
from .world import Environment, Obstacle, inflate

PLANTS = ("double_integrator", "quadrotor", "acc")


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` is a dotted path, ``line`` is 1-based when known."""

    def __init__(self, message, field=None, line=None):
        where = ""
        if field:
            where += f"field '{field}'"
        if line:
            where += f"{' ' if where else ''}(line {line})"
        super().__init__(f"{where}: {message}" if where else message)
        self.field = field
        self.line = line


@dataclass
class Scenario:
    name: str
    plant: str
    raw: dict
    rate_hz: float = 100.0
    horizon_s: float = 80.0
    seed: int = 0
    agent_position: np.ndarray = None
    governor_position: np.ndarray = None
    environment: Environment = None
    regions: dict = field(default_factory=dict)
    stl_text: str = ""
    formula: object = None
    t_star: object = 0.5
    smoothing: float = 1.0
    governor: GovernorConfig = None
    gains: dict = field(default_factory=dict)
    tuning: dict = field(default_factory=dict)
    hocbf: dict = field(default_factory=dict)
    quadrotor: dict = field(default_factory=dict)
    acc: dict = field(default_factory=dict)
    source: str = None

    @property
    def dt(self):
        return 1.0 / self.rate_hz

    @property
    def n_steps(self):
        return int(round(self.horizon_s * self.rate_hz))

    @property
    def dimension(self):
        return 3 if self.plant == "quadrotor" else 2

    def make_plant(self, theta=None, check=True):
        if self.plant == "double_integrator":
            gains = DoubleIntegratorGains(float(self.gains.get("k_p", -6.0)), float(self.gains.get("k_d", -4.0)))
            plant = DoubleIntegrator(gains, dim=2, check=check)
        elif self.plant == "quadrotor":
            q = self.quadrotor
            params = QuadrotorParams(
                m=float(q.get("mass_kg", 1.0)),
                J=np.diag(q.get("inertia_diag_kgm2", [0.02, 0.02, 0.04])),
                gravity=float(q.get("gravity_mps2", 9.81)),
                k_x=float(self.gains.get("k_x", 8.0)),
                k_v=float(self.gains.get("k_v", 4.0)),
                k_R=float(self.gains.get("k_R", 2.0)),
                k_Omega=float(self.gains.get("k_Omega", 0.4)),
                arm=float(q.get("arm_m", 0.2)),
                ff_accel_max=float(q.get("feedforward_accel_max_mps2", 2.0)),
                ff_rate_max=float(q.get("feedforward_rate_max_radps", 2.0)),
                ff_rate_dot_max=float(q.get("feedforward_rate_dot_max_radps2", 10.0)),
            )
            plant = Quadrotor(params, heading=q.get("heading", [1.0, 0.0, 0.0]), check=check)
        else:
            raise ScenarioError(f"plant '{self.plant}' has no closed-loop model", "plant")
        if theta is not None:
            plant = plant.with_theta(theta, check=check)
        return plant

    def planning_environment(self):
        """Environment the governor sees (inflated by the rotor arm for quadrotors)."""
        margin = float(self.environment_raw().get("inflation_m", 0.0))
        if self.plant == "quadrotor" and "inflation_m" not in self.environment_raw():
            margin = float(self.quadrotor.get("arm_m", 0.2))
        return inflate(self.environment, margin) if margin > 0 else self.environment

    def environment_raw(self):
        return self.raw.get("environment", {}) or {}

    def to_dict(self):
        return copy.deepcopy(self.raw)

    def dumps(self):
        return dump_scenario(self.raw)

    def with_overrides(self, **raw_updates):
        data = copy.deepcopy(self.raw)
        _deep_update(data, raw_updates)
        return scenario_from_dict(data, source=self.source)


def _deep_update(base, updates):
    for k, v in updates.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def dump_scenario(data):
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None)


def _line_map(text):
    """Dotted-path -> line number for every mapping key in a YAML document."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = f"{path}[{i}]"
                lines[p] = v.start_mark.line + 1
                walk(v, p)

    if root is not None:
        walk(root, "")
    return lines


class _Reader:
    def __init__(self, data, lines):
        self.data = data
        self.lines = lines

    def fail(self, path, message):
        # a missing key has no line of its own; point at its nearest parent
        parent = path
        line = self.lines.get(parent)
        while line is None and "." in parent:
            parent = parent.rsplit(".", 1)[0]
            line = self.lines.get(parent)
        raise ScenarioError(message, path, line)

    def get(self, path, default=None, required=False):
        node = self.data
        for part in re.findall(r"[^.\[\]]+|\[\d+\]", path):
            if part.startswith("["):
                i = int(part[1:-1])
                ok = isinstance(node, list) and i < len(node)
                key = i
            else:
                ok = isinstance(node, dict) and part in node
                key = part
            if not ok:
                if required:
                    self.fail(path, "missing required field")
                return default
            node = node[key]
        return node

    def number(self, path, default=None, required=False, positive=False, nonneg=False):
        v = self.get(path, default, required)
        if v is None:
            return None
        try:
            v = float(v)
        except (TypeError, ValueError):
            self.fail(path, f"expected a number, got {v!r}")
        if positive and not v > 0:
            self.fail(path, "must be positive")
        if nonneg and v < 0:
            self.fail(path, "must be nonnegative")
        return v

    def vector(self, path, dim, default=None, required=False):
        v = self.get(path, default, required)
        if v is None:
            return None
        try:
            arr = np.asarray(v, dtype=float).reshape(-1)
        except (TypeError, ValueError):
            self.fail(path, f"expected a list of {dim} numbers")
        if arr.size != dim:
            self.fail(path, f"expected {dim} components, got {arr.size}")
        return arr


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return loads_scenario(text, source=str(path))


def loads_scenario(text, source=None):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"malformed YAML: {getattr(exc, 'problem', exc)}",
                            line=mark.line + 1 if mark else None) from None
    return scenario_from_dict(data, lines=_line_map(text), source=source)


def scenario_from_dict(data, lines=None, source=None):
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a mapping")
    r = _Reader(data, lines or {})
    plant = r.get("plant", required=True)
    if plant not in PLANTS:
        r.fail("plant", f"must be one of {', '.join(PLANTS)}")
    sc = Scenario(name=str(r.get("name", "scenario")), plant=plant, raw=copy.deepcopy(data), source=source)
    sc.rate_hz = r.number("rate_hz", 100.0, positive=True)
    sc.horizon_s = r.number("horizon_s", 80.0, positive=True)
    seed = r.get("seed", 0)
    if not isinstance(seed, int):
        r.fail("seed", "must be an integer")
    sc.seed = seed

    if plant == "acc":
        acc = r.get("acc", required=True)
        if not isinstance(acc, dict):
            r.fail("acc", "must be a mapping")
        for key in ("lead_speed_mps", "min_headway_m", "headway_m", "ego_speed_mps"):
            r.number(f"acc.{key}", required=True)
        sc.acc = dict(acc)
        sc.formula = parse_stl("")
        return sc

    dim = sc.dimension
    sc.agent_position = r.vector("initial.agent_position_m", dim, [0.0] * dim)
    sc.governor_position = r.vector("initial.governor_position_m", dim, list(sc.agent_position))

    env = r.get("environment", {}) or {}
    if not isinstance(env, dict):
        r.fail("environment", "must be a mapping")
    obstacles = []
    for i, _ in enumerate(env.get("obstacles", []) or []):
        c = r.vector(f"environment.obstacles[{i}].center_m", dim, required=True)
        rad = r.number(f"environment.obstacles[{i}].radius_m", required=True, positive=True)
        obstacles.append(Obstacle(tuple(c), rad))
    arena_c = arena_r = None
    if env.get("arena") is not None:
        arena_c = r.vector("environment.arena.center_m", dim, required=True)
        arena_r = r.number("environment.arena.radius_m", required=True, positive=True)
    r.number("environment.inflation_m", 0.0, nonneg=True)
    try:
        sc.environment = Environment(tuple(obstacles), None if arena_c is None else tuple(arena_c), arena_r, dim)
        sc.planning_environment()
    except ValueError as exc:
        r.fail("environment", str(exc))

    regions = r.get("regions", {}) or {}
    if not isinstance(regions, dict):
        r.fail("regions", "must be a mapping of name -> region")
    for name, spec in regions.items():
        base = f"regions.{name}"
        kind = r.get(f"{base}.kind", required=True)
        try:
            if kind == HALFSPACE:
                pred = Predicate(name, kind, normal=tuple(r.vector(f"{base}.normal", dim, required=True)),
                                 offset=r.number(f"{base}.offset_m", 0.0))
            else:
                pred = Predicate(name, kind, center=tuple(r.vector(f"{base}.center_m", dim, required=True)),
                                 radius=r.number(f"{base}.radius_m", required=True, positive=True))
        except ScenarioError:
            raise
        except ValueError as exc:
            r.fail(base, str(exc))
        sc.regions[name] = pred
    sc.stl_text = str(r.get("stl", "") or "")
    try:
        sc.formula = parse_stl(sc.stl_text, sc.regions)
    except ValueError as exc:
        r.fail("stl", str(exc))

    t_star = r.get("barrier.t_star", 0.5)
    if isinstance(t_star, (list, tuple)):
        for i, v in enumerate(t_star):
            if not isinstance(v, (int, float)) or not 0 <= v <= 1:
                r.fail(f"barrier.t_star", f"entry {i} must be a fraction in [0, 1]")
    elif t_star not in ("start", "midpoint", "end") and not (isinstance(t_star, (int, float)) and 0 <= t_star <= 1):
        r.fail("barrier.t_star", "must be a fraction in [0, 1], start, midpoint, end or a list of fractions")
    sc.t_star = t_star
    sc.smoothing = r.number("barrier.smoothing", 1.0, positive=True)

    gov = r.get("governor", {}) or {}
    H = gov.get("H", 1.0)
    try:
        sc.governor = GovernorConfig(
            H=np.asarray(H, dtype=float),
            q_dist=r.number("governor.q_dist", -1e-3),
            kappa_obs=r.number("governor.kappa_obs", 1.0, positive=True),
            kappa_stl=r.number("governor.kappa_stl", 1.0, positive=True),
            u_max=r.number("governor.u_max", 5.0, positive=True),
            delta_floor=r.number("governor.delta_floor", 0.0, nonneg=True),
            delta_max=r.number("governor.delta_max", np.inf, positive=True),
            dim=dim,
        )
    except ValueError as exc:
        r.fail("governor", str(exc))

    gains = r.get("gains", {}) or {}
    for k in gains:
        r.number(f"gains.{k}", required=True)
    sc.gains = {k: float(v) for k, v in gains.items()}
    sc.tuning = dict(r.get("tuning", {}) or {})
    sc.hocbf = dict(r.get("hocbf", {}) or {})
    for t in sc.hocbf.get("targets", []) or []:
        if t not in sc.regions:
            r.fail("hocbf.targets", f"unknown region {t!r}")
    sc.quadrotor = dict(r.get("quadrotor", {}) or {})
    try:
        sc.make_plant(check=False)
    except ValueError as exc:
        r.fail("gains" if plant == "double_integrator" else "quadrotor", str(exc))
    return sc
