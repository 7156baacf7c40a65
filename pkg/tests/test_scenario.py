import numpy as np
import pytest

from ergcbf.cli import resolve_scenario, shipped_scenarios
from ergcbf.scenario import ScenarioError, loads_scenario

BASE = """\
name: t
plant: double_integrator
rate_hz: 100
environment:
  obstacles:
    - {center_m: [2.0, 0.0], radius_m: 0.5}
regions:
  a: {kind: reach, center_m: [4.0, 0.0], radius_m: 1.0}
stl: "F[0,10] a"
"""


class TestLoading:
    def test_minimal(self):
        sc = loads_scenario(BASE)
        assert sc.dt == 0.01 and sc.n_steps == 8000
        assert np.array_equal(sc.governor_position, sc.agent_position)
        assert list(sc.regions) == ["a"]

    @pytest.mark.parametrize("name,fname", [("double_integrator", "double_integrator.scenario"),
                                            ("quadrotor", "quadrotor.scenario"), ("acc", "acc.fixture")])
    def test_shipped(self, name, fname):
        assert fname in shipped_scenarios()
        sc = resolve_scenario(name)
        assert sc.name == name
        assert loads_scenario(sc.dumps()).to_dict() == sc.to_dict()

    def test_quadrotor_inflates_by_arm(self):
        sc = resolve_scenario("quadrotor")
        plan = sc.planning_environment()
        assert np.allclose(plan.radii, sc.environment.radii + 0.2)

    def test_overrides(self):
        sc = loads_scenario(BASE).with_overrides(rate_hz=50, governor={"u_max": 1.0})
        assert sc.rate_hz == 50 and sc.governor.u_max == 1.0


class TestErrors:
    @pytest.mark.parametrize("text,field,line", [
        (BASE.replace("rate_hz: 100", "rate_hz: -3"), "rate_hz", 3),
        (BASE.replace("radius_m: 0.5", "radius_m: 0"), "environment.obstacles[0].radius_m", 6),
        (BASE.replace("F[0,10] a", "F[0,10] b"), "stl", 9),
        (BASE.replace("double_integrator", "boat"), "plant", 2),
        (BASE.replace("[4.0, 0.0]", "[4.0]"), "regions.a.center_m", 8),
    ])
    def test_field_and_line(self, text, field, line):
        with pytest.raises(ScenarioError) as exc:
            loads_scenario(text)
        assert exc.value.field == field
        assert exc.value.line == line
        assert field in str(exc.value)

    def test_missing_plant(self):
        with pytest.raises(ScenarioError, match="plant"):
            loads_scenario("name: x\n")

    def test_malformed_yaml(self):
        with pytest.raises(ScenarioError, match="malformed") as exc:
            loads_scenario("plant: [unclosed\n")
        assert exc.value.line is not None

    def test_not_mapping(self):
        with pytest.raises(ScenarioError):
            loads_scenario("- 1\n- 2\n")

    def test_bad_t_star(self):
        with pytest.raises(ScenarioError, match="t_star"):
            loads_scenario(BASE + "barrier: {t_star: 1.5}\n")

    def test_acc_requires_fields(self):
        with pytest.raises(ScenarioError, match="lead_speed_mps"):
            loads_scenario("plant: acc\nacc: {min_headway_m: 10, headway_m: 50, ego_speed_mps: 15}\n")

    def test_unknown_shipped_name(self):
        with pytest.raises(ScenarioError):
            resolve_scenario("no_such_scenario")
