import numpy as np
import pytest

from ergcbf.governor import dsm, effective_margin
from ergcbf.scenario import loads_scenario
from ergcbf.simulation import CSV_VERSION, erg_reached, run_closed_loop, run_hocbf, summarize

SHORT = """
name: short
plant: double_integrator
rate_hz: 50
horizon_s: 8
initial: {agent_position_m: [0.0, 0.0]}
environment:
  arena: {center_m: [0.0, 0.0], radius_m: 6.0}
  obstacles:
    - {center_m: [2.0, 0.6], radius_m: 0.6}
regions:
  goal: {kind: reach, center_m: [3.0, 3.0], radius_m: 0.8}
stl: "F[0,8] goal"
governor: {q_dist: -50.0, u_max: 2.0, delta_max: 1.0, kappa_stl: 0.3}
"""


@pytest.fixture(scope="module")
def short():
    return loads_scenario(SHORT)


@pytest.fixture(scope="module")
def short_log(short):
    return run_closed_loop(short)


class TestShortRun:
    def test_shapes(self, short, short_log):
        n = short.n_steps + 1
        assert len(short_log) == n
        assert short_log.state.shape == (n, 4)
        assert short_log.u_plant.shape == (n, 2)
        assert np.all(np.isnan(short_log.u_plant[-1]))

    def test_margin_recomputes(self, short, short_log):
        plant = short.make_plant()
        env = short.planning_environment()
        for k in range(0, len(short_log), 17):
            expected = dsm(short_log.state[k], short_log.g[k], plant.P, plant.l, env)
            assert short_log.delta[k] == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_governor_is_euler_step(self, short, short_log):
        cfg = short.governor
        for k in range(len(short_log) - 1):
            scale = effective_margin(short_log.delta[k], cfg)
            g_next = short_log.g[k] + short.dt * max(scale, 0.0) * short_log.u_g[k]
            assert np.allclose(short_log.g[k + 1], g_next, atol=1e-14)

    def test_positive_margin_implies_clear_output(self, short_log):
        ok = short_log.delta >= 0
        assert ok.all()
        assert np.all(short_log.clearance_y[ok] >= -1e-9)
        assert np.all(short_log.clearance_g >= -1e-9)

    def test_output_within_lyapunov_ball(self, short, short_log):
        plant = short.make_plant()
        for k in range(0, len(short_log), 11):
            V = plant.lyapunov_value(short_log.state[k], short_log.g[k])
            assert np.linalg.norm(short_log.y[k] - short_log.g[k]) <= plant.l * np.sqrt(V) + 1e-12

    def test_reaches_goal(self, short, short_log):
        m = summarize(short_log, short)
        assert m["t_a"] is not None and m["robustness_y"] > 0
        assert m["qp_relaxed"] == 0

    def test_csv_deterministic(self, short, short_log):
        text = short_log.to_csv()
        assert text.startswith(f"# {CSV_VERSION}\n")
        assert run_closed_loop(short).to_csv() == text
        header = text.splitlines()[1].split(",")
        assert header[0] == "t" and header[-1] == "active_set"
        assert len(text.splitlines()) == len(short_log) + 2

    def test_rate_override(self, short):
        log = run_closed_loop(short, rate_hz=25)
        assert log.dt == pytest.approx(0.04)
        assert len(log) == 201


class TestEdgeCases:
    def test_empty_task_no_obstacles(self):
        sc = loads_scenario("plant: double_integrator\nhorizon_s: 1\ninitial: {agent_position_m: [1.0, 2.0]}\n")
        log = run_closed_loop(sc)
        assert np.all(log.g == [1.0, 2.0])
        assert np.all(np.isinf(log.delta))
        m = summarize(log, sc)
        assert m["t_g"] == 0.0 and m["t_a"] == 0.0
        assert m["min_delta"] is None

    def test_failure_can_be_logged(self, short):
        bad = short.with_overrides(initial={"agent_position_m": [2.0, 0.6]})
        log = run_closed_loop(bad, on_failure="log")
        assert log.failure is not None or log.delta[0] < 0

    def test_erg_reached(self, short, short_log):
        t = erg_reached(short_log, short, ["goal"])["goal"]
        assert t == summarize(short_log, short)["t_a"]


class TestHocbfBaseline:
    def test_requires_double_integrator(self, quad_scenario):
        with pytest.raises(ValueError):
            run_hocbf(quad_scenario)

    @pytest.mark.parametrize("half_gap,reached", [(0.9, False), (1.6, True)])
    def test_passage_width(self, di_scenario, half_gap, reached):
        obs = [dict(o) for o in di_scenario.raw["environment"]["obstacles"]]
        obs[0]["center_m"] = [-half_gap, 4.3]
        obs[1]["center_m"] = [half_gap, 4.3]
        sc = di_scenario.with_overrides(environment={"obstacles": obs}, horizon_s=30)
        h = run_hocbf(sc)
        assert (h.reached["reach1"] is not None) == reached
        # the filter never lets the agent into an obstacle
        for o in sc.environment.obstacles:
            assert np.min(np.linalg.norm(h.x - o.center, axis=1)) >= o.radius - 1e-6
