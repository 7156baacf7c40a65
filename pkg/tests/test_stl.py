import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergcbf.stl import (
    Always,
    And,
    Atom,
    BarrierCompilationError,
    Eventually,
    InsufficientDataError,
    Predicate,
    Signal,
    StlSyntaxError,
    TrueFormula,
    Until,
    compile_barrier,
    completion_time,
    horizon,
    parse_stl,
    robustness,
    smooth_min,
    to_text,
)
from ergcbf.stl.barrier import smooth_min_weights

A = Predicate("A", "reach", center=(1.0, 0.0), radius=0.5)
B = Predicate("B", "reach", center=(0.0, 1.0), radius=0.5)
H = Predicate("H", "halfspace", normal=(1.0, 0.0), offset=0.0)
REGIONS = {"A": A, "B": B, "H": H}


def line_signal(x, dt=0.1):
    """Planar signal moving along the x axis through the given positions."""
    x = np.asarray(x, dtype=float)
    return Signal(np.column_stack([x, np.zeros_like(x)]), dt)


class TestPredicate:
    def test_reach_value(self):
        assert A.value([1.0, 0.0]) == pytest.approx(0.5)
        assert A.value([2.0, 0.0]) == pytest.approx(-0.5)

    def test_vectorised_value(self):
        assert np.allclose(A.value([[1.0, 0.0], [1.5, 0.0]]), [0.5, 0.0])

    def test_halfspace(self):
        assert H.value([2.0, 5.0]) == pytest.approx(2.0)
        assert np.array_equal(H.gradient([0.0, 0.0]), [1.0, 0.0])
        assert H.h_max == np.inf

    def test_gradient_at_center_is_zero(self):
        assert np.array_equal(A.gradient([1.0, 0.0]), [0.0, 0.0])

    def test_gradient_matches_finite_difference(self):
        y = np.array([0.3, 0.4])
        eps = 1e-6
        fd = [(A.value(y + eps * e) - A.value(y - eps * e)) / (2 * eps) for e in np.eye(2)]
        assert np.allclose(A.gradient(y), fd, atol=1e-8)

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            Predicate("X", "reach", center=(0, 0), radius=0.0)

    def test_bad_normal(self):
        with pytest.raises(ValueError):
            Predicate("X", "halfspace", normal=(1.0, 1.0))


class TestParser:
    def test_eventually(self):
        assert parse_stl("F[0,5] A", REGIONS) == Eventually(0.0, 5.0, Atom(A))

    def test_conjunction_flattens(self):
        node = parse_stl("F[0,5] A & G[1,2] B & F[3,4] A", REGIONS)
        assert isinstance(node, And) and len(node.children) == 3

    def test_until_and_negation(self):
        node = parse_stl("!B U[0,10] A", REGIONS)
        assert node == Until(0.0, 10.0, Atom(B, negated=True), Atom(A))

    def test_empty_is_true(self):
        assert parse_stl("   ") == TrueFormula()

    def test_decimal_and_exponent(self):
        node = parse_stl("G[.5,1e1] (A & B)", REGIONS)
        assert node.a == 0.5 and node.b == 10.0

    def test_round_trip(self):
        for text in ["F[5,30] A & F[30,50] B", "!B U[0,10] A", "G[0,2] (A & !B)", "true"]:
            node = parse_stl(text, REGIONS)
            assert parse_stl(to_text(node), REGIONS) == node

    def test_region_named_like_operator(self):
        regions = {"F": Predicate("F", "reach", center=(0, 0), radius=1.0)}
        node = parse_stl("F[0,1] F", regions)
        assert node.child.predicate.name == "F"

    @pytest.mark.parametrize("text,pos", [
        ("F[0,5] C", 7),
        ("F[5,1] A", 1),
        ("F[0,5 A", 6),
        ("A &", 3),
        ("A $ B", 2),
    ])
    def test_errors_report_position(self, text, pos):
        with pytest.raises(StlSyntaxError) as exc:
            parse_stl(text, REGIONS)
        assert exc.value.position == pos

    def test_nested_temporal_rejected(self):
        with pytest.raises(StlSyntaxError, match="temporal"):
            parse_stl("F[0,5] G[0,1] A", REGIONS)

    def test_negated_conjunction_rejected(self):
        with pytest.raises(StlSyntaxError, match="negation"):
            parse_stl("!(A & B)", REGIONS)

    def test_horizon(self):
        assert horizon(parse_stl("F[5,30] A & G[0,50] B", REGIONS)) == 50.0


class TestRobustness:
    def test_eventually_takes_max(self):
        sig = line_signal(np.linspace(0.0, 2.0, 21))
        assert robustness(sig, parse_stl("F[0,2] A", REGIONS)) == pytest.approx(0.5)

    def test_always_takes_min(self):
        sig = line_signal(np.linspace(0.0, 2.0, 21))
        assert robustness(sig, parse_stl("G[0,2] A", REGIONS)) == pytest.approx(-0.5)

    def test_window_bounds_are_inclusive(self):
        x = np.zeros(11)
        x[5] = 1.0
        sig = line_signal(x)
        assert robustness(sig, parse_stl("F[0.5,0.5] A", REGIONS)) == pytest.approx(0.5)
        assert robustness(sig, parse_stl("F[0.6,1] A", REGIONS)) == pytest.approx(-0.5)

    def test_until(self):
        # left holds throughout, right first holds at k=4
        x = np.array([-1.0, -1.0, -1.0, -1.0, 1.0, 1.0])
        sig = Signal(np.column_stack([x, np.zeros(6)]), 1.0)
        left = Predicate("L", "halfspace", normal=(-1.0, 0.0), offset=-1.5)
        formula = Until(0.0, 5.0, Atom(left), Atom(A))
        assert robustness(sig, formula) == pytest.approx(0.5)

    def test_at_later_time(self):
        sig = line_signal(np.linspace(0.0, 2.0, 21))
        assert robustness(sig, Atom(A), t=1.0) == pytest.approx(0.5)

    def test_insufficient_data(self):
        sig = line_signal(np.zeros(5))
        with pytest.raises(InsufficientDataError):
            robustness(sig, parse_stl("F[0,1] A", REGIONS))

    def test_true_is_infinite(self):
        assert robustness(line_signal([0.0]), TrueFormula()) == np.inf

    def test_non_uniform_rejected(self):
        with pytest.raises(ValueError):
            Signal.from_times([0.0, 0.1, 0.3], np.zeros((3, 2)))

    def test_from_times(self):
        sig = Signal.from_times(np.arange(5) * 0.25 + 1.0, np.zeros((5, 2)))
        assert sig.dt == pytest.approx(0.25) and sig.t0 == 1.0


class TestCompletion:
    def test_eventually(self):
        sig = line_signal(np.linspace(0.0, 2.0, 21))
        assert completion_time(sig, parse_stl("F[0,2] A", REGIONS)) == pytest.approx(0.5)

    def test_never(self):
        sig = line_signal(np.zeros(21))
        assert completion_time(sig, parse_stl("F[0,2] A", REGIONS)) is None

    def test_modes_differ_on_always(self):
        sig = line_signal(np.ones(31))
        f = parse_stl("G[1,3] A", REGIONS)
        assert completion_time(sig, f, "determined") == pytest.approx(3.0)
        assert completion_time(sig, f, "witnessed") == pytest.approx(1.0)

    def test_conjunction_is_latest(self):
        x = np.concatenate([np.linspace(0, 1, 11), np.ones(20)])
        sig = Signal(np.column_stack([x, np.zeros_like(x)]), 0.1)
        f = parse_stl("F[0,3] A & G[2,3] A", REGIONS)
        assert completion_time(sig, f, "witnessed") == pytest.approx(2.0)
        assert completion_time(sig, f, "determined") == pytest.approx(3.0)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            completion_time(line_signal([0.0]), TrueFormula(), mode="eager")


class TestSmoothMin:
    def test_two_zeros(self):
        assert smooth_min([0.0, 0.0]) == pytest.approx(-math.log(2.0), abs=1e-15)

    def test_separated(self):
        assert smooth_min([0.0, 10.0]) == pytest.approx(-math.log1p(math.exp(-10.0)), abs=1e-15)

    def test_single(self):
        assert smooth_min([3.5], 7.0) == 3.5

    def test_empty(self):
        assert smooth_min([]) == np.inf

    def test_large_values_do_not_overflow(self):
        assert smooth_min([1e4, 1e4 + 1.0], 10.0) == pytest.approx(1e4 - math.log1p(math.exp(-10.0)) / 10.0)

    def test_tightens_with_smoothing(self):
        v = [0.3, 0.5, 1.0]
        vals = [smooth_min(v, k) for k in (1.0, 5.0, 50.0)]
        assert vals[0] < vals[1] < vals[2] < 0.3

    def test_weights_are_gradient(self):
        v = np.array([0.2, 0.7, -0.1])
        eps = 1e-7
        fd = [(smooth_min(v + eps * e, 3.0) - smooth_min(v - eps * e, 3.0)) / (2 * eps) for e in np.eye(3)]
        w = smooth_min_weights(v, 3.0)
        assert np.allclose(w, fd, atol=1e-7)
        assert w.sum() == pytest.approx(1.0)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.floats(0.1, 20.0))
    @settings(max_examples=200, deadline=None)
    def test_sandwich(self, v, k):
        s = smooth_min(v, k)
        m = min(v)
        assert m - math.log(len(v)) / k - 1e-12 * max(1.0, abs(m)) <= s <= m + 1e-12 * max(1.0, abs(m))


class TestBarrier:
    def test_eventually_component(self):
        fb = compile_barrier(parse_stl("F[0,10] A", REGIONS), [0.0, 0.0], t_star_policy=0.5)
        (c,) = fb.components
        assert c.t_zero == 5.0
        # anchored so that b(g0, 0) reaches the predicate's maximum
        assert fb.value([0.0, 0.0], 0.0) == pytest.approx(A.h_max)
        assert fb.value([0.0, 0.0], 5.0) == pytest.approx(A.value([0.0, 0.0]))
        assert fb.time_derivative([0.0, 0.0], 1.0) == pytest.approx(-c.gamma0 / 5.0)

    def test_active_window(self):
        fb = compile_barrier(parse_stl("F[5,30] A & F[30,50] B", REGIONS), [0.5, 0.5], smoothing=5.0)
        assert fb.active_window == (0.0, 50.0)
        assert [c.label for c in fb.active(40.0)] == ["F[30,50] B"]

    def test_spatial_gradient_matches_finite_difference(self):
        fb = compile_barrier(parse_stl("F[0,10] A & F[0,20] B", REGIONS), [0.5, 0.5], smoothing=2.0)
        g, t, eps = np.array([0.3, 0.6]), 2.0, 1e-6
        fd = [(fb.value(g + eps * e, t) - fb.value(g - eps * e, t)) / (2 * eps) for e in np.eye(2)]
        assert np.allclose(fb.spatial_gradient(g, t), fd, atol=1e-7)

    def test_time_derivative_matches_finite_difference(self):
        fb = compile_barrier(parse_stl("F[0,10] A & F[0,20] B", REGIONS), [0.5, 0.5], smoothing=2.0)
        g, t, eps = np.array([0.3, 0.6]), 2.0, 1e-6
        fd = (fb.value(g, t + eps) - fb.value(g, t - eps)) / (2 * eps)
        assert fb.time_derivative(g, t) == pytest.approx(fd, abs=1e-7)

    def test_until_splits(self):
        fb = compile_barrier(parse_stl("!B U[0,10] A", REGIONS), [0.0, 0.0], smoothing=5.0)
        kinds = sorted(c.kind for c in fb.components)
        assert kinds == ["always", "eventually"]

    def test_smooth_conjunction_gap_can_be_infeasible(self):
        # both components start at 0.5, below ln 2 with unit smoothing
        with pytest.raises(BarrierCompilationError, match="smooth conjunction"):
            compile_barrier(parse_stl("F[0,10] A & F[0,20] B", REGIONS), [0.5, 0.5], smoothing=1.0)

    def test_initially_infeasible_always(self):
        with pytest.raises(BarrierCompilationError, match="infeasible"):
            compile_barrier(parse_stl("G[0,5] A", REGIONS), [0.0, 0.0])

    def test_t_star_outside_window(self):
        with pytest.raises(BarrierCompilationError):
            compile_barrier(parse_stl("F[0,5] A", REGIONS), [0.0, 0.0], t_star_policy=2.0)

    def test_empty_task(self):
        fb = compile_barrier(TrueFormula(), [0.0, 0.0])
        assert fb.components == []
        assert fb.time_derivative([0.0, 0.0], 0.0) == 0.0
        assert np.array_equal(fb.spatial_gradient([0.0, 0.0], 0.0), [0.0, 0.0])

    def test_component_values_nan_when_inactive(self):
        fb = compile_barrier(parse_stl("F[0,10] A", REGIONS), [0.0, 0.0])
        assert np.isnan(fb.component_values([0.0, 0.0], 11.0)["F[0,10] A"])

    def test_always_component_has_no_offset_when_a_is_zero(self):
        fb = compile_barrier(parse_stl("G[0,5] H", REGIONS), [1.0, 0.0])
        assert fb.components[0].gamma0 == 0.0
        assert isinstance(parse_stl("G[0,5] H", REGIONS), Always)
