import numpy as np
import pytest

from ergcbf import qp
from ergcbf.governor import (
    Governor,
    GovernorConfig,
    GovernorState,
    assemble_navigation_qp,
    dsm,
    effective_margin,
    governor_update,
    lyapunov_energy,
    relax_and_resolve,
)
from ergcbf.plants import DoubleIntegrator
from ergcbf.stl import Predicate, compile_barrier, parse_stl
from ergcbf.world import Environment, Obstacle

ENV = Environment((Obstacle((2.0, 0.0), 1.0),))
PLANT = DoubleIntegrator()


class TestMargin:
    def test_at_equilibrium(self):
        x = PLANT.equilibrium([0.0, 0.0])
        assert dsm(x, [0.0, 0.0], PLANT.P, PLANT.l, ENV) == pytest.approx(1.0)

    def test_offset_state(self):
        x = np.array([0.1, 0.0, 0.0, 0.2])
        e = x.copy()
        expected = 1.0 - PLANT.l ** 2 * e @ PLANT.P @ e
        assert dsm(x, [0.0, 0.0], PLANT.P, PLANT.l, ENV) == pytest.approx(expected)
        assert lyapunov_energy(x, [0.0, 0.0], PLANT.P) == pytest.approx(e @ PLANT.P @ e)

    def test_reference_inside_obstacle_is_negative(self):
        x = PLANT.equilibrium([2.5, 0.0])
        assert dsm(x, [2.5, 0.0], PLANT.P, PLANT.l, ENV) == pytest.approx(-0.25)

    def test_no_constraints(self):
        assert dsm(np.zeros(4), [0.0, 0.0], PLANT.P, PLANT.l, Environment()) == np.inf

    def test_positive_margin_keeps_output_clear(self):
        # Delta > 0 implies the output stays outside the obstacle
        rng = np.random.default_rng(0)
        g = np.array([0.0, 0.0])
        for _ in range(2000):
            x = np.concatenate([g, [0.0, 0.0]]) + rng.normal(scale=0.4, size=4)
            if dsm(x, g, PLANT.P, PLANT.l, ENV) > 0:
                assert np.linalg.norm(x[:2] - [2.0, 0.0]) >= 1.0

    def test_effective_margin_clips(self):
        cfg = GovernorConfig(delta_floor=0.1, delta_max=2.0)
        assert effective_margin(-1.0, cfg) == 0.1
        assert effective_margin(5.0, cfg) == 2.0
        assert effective_margin(np.inf, cfg) == 1.0


class TestQpAssembly:
    def test_zero_margin_rows_vanish(self):
        env = Environment((Obstacle((2.0, 0.0), 1.0),), (0.0, 0.0), 5.0)
        nav = assemble_navigation_qp(np.array([0.0, 0.5]), 0.0, 0.0, env, None, GovernorConfig(), 0.01)
        assert nav.obstacle_rows == [0, 1]
        assert np.all(nav.problem.G == 0.0)
        assert np.all(nav.problem.h >= 0.0)

    def test_stl_row_added_while_active(self):
        pred = Predicate("A", "reach", center=(0.0, 3.0), radius=0.5)
        fb = compile_barrier(parse_stl("F[0,10] A", {"A": pred}), [0.0, 0.0])
        nav = assemble_navigation_qp(np.zeros(2), 1.0, 0.5, ENV, fb, GovernorConfig(), 0.01)
        assert nav.stl_rows == [1]
        assert np.allclose(nav.problem.G[1], -0.5 * fb.spatial_gradient(np.zeros(2), 1.0))
        nav = assemble_navigation_qp(np.zeros(2), 11.0, 0.5, ENV, fb, GovernorConfig(), 0.01)
        assert nav.stl_rows == []

    @pytest.mark.parametrize("q", [-1e-3, -10.0, -1e4])
    def test_objective_stays_convex(self, q):
        cfg = GovernorConfig(q_dist=q)
        nav = assemble_navigation_qp(np.array([0.5, 0.3]), 0.0, 1.0, ENV, None, cfg, 0.01)
        assert np.min(np.linalg.eigvalsh(nav.problem.H)) >= 0.5 * 2.0 - 1e-9

    def test_clearance_reward_points_away(self):
        nav = assemble_navigation_qp(np.zeros(2), 0.0, 1.0, ENV, None, GovernorConfig(q_dist=-10.0), 0.01)
        u = qp.solve(nav.problem).u
        assert u[0] < 0

    def test_box_bounds(self):
        nav = assemble_navigation_qp(np.zeros(2), 0.0, 1.0, ENV, None, GovernorConfig(u_max=2.5), 0.01)
        assert np.all(nav.problem.upper == 2.5) and np.all(nav.problem.lower == -2.5)


class TestUpdate:
    def test_freezes_at_nonpositive_margin(self):
        g = np.array([1.0, 2.0])
        assert np.array_equal(governor_update(g, 0.0, [3.0, 4.0], 0.01), g)
        assert np.array_equal(governor_update(g, -5.0, [3.0, 4.0], 0.01), g)

    def test_bilinear(self):
        g = np.array([1.0, 2.0])
        u = np.array([0.3, -0.7])
        step = governor_update(g, 0.4, u, 0.01) - g
        assert np.allclose(governor_update(g, 0.8, u, 0.01) - g, 2 * step)
        assert np.allclose(governor_update(g, 0.4, 3 * u, 0.01) - g, 3 * step)
        assert np.allclose(step, 0.01 * 0.4 * u)


class TestRelaxation:
    def test_opposing_stl_rows(self):
        prob = qp.QpProblem(np.eye(2), np.zeros(2), [[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0])
        assert not qp.solve(prob).optimal
        sol, slack = relax_and_resolve(prob, [0, 1])
        assert sol.optimal
        assert slack == pytest.approx(1.0, abs=1e-6)
        assert np.allclose(sol.u, [0.0, 0.0], atol=1e-6)

    def test_obstacle_rows_stay_hard(self):
        # row 0 (obstacle) demands u0 <= -2, row 1 (STL) demands u0 >= 1
        prob = qp.QpProblem(np.eye(2), np.zeros(2), [[1.0, 0.0], [-1.0, 0.0]], [-2.0, -1.0])
        sol, slack = relax_and_resolve(prob, [1])
        assert sol.u[0] <= -2.0 + 1e-9
        assert slack == pytest.approx(3.0, abs=1e-6)

    def test_governor_reports_relaxation(self):
        pred = Predicate("A", "reach", center=(0.0, 3.0), radius=0.5)
        fb = compile_barrier(parse_stl("F[0,1] A", {"A": pred}), [0.0, 0.0])
        gov = Governor(ENV, fb, PLANT.P, PLANT.l, GovernorConfig(u_max=0.1))
        state = GovernorState(np.zeros(2), 0.0)
        # the barrier decays faster than u_max allows the governor to follow
        for _ in range(60):
            state = gov.step(state, PLANT.equilibrium(state.g), 0.01)
        assert state.last_qp.relaxed
        assert state.last_qp.slack > 0


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(q_dist=0.0), dict(kappa_obs=0.0), dict(u_max=-1.0), dict(delta_floor=-0.1),
        dict(H=-np.eye(2)), dict(H=np.eye(3)),
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            GovernorConfig(**kw)

    def test_scalar_h_expands(self):
        assert np.array_equal(GovernorConfig(H=[[2.0]], dim=3).H, 2.0 * np.eye(3))
