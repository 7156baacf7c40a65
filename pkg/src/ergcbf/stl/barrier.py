"""Compilation of STL formulas into time-varying barrier functions.

Each temporal conjunct becomes one barrier ``b(g, t) = h(g) + gamma(t)``
where ``h`` is the (smoothly conjoined) predicate value and ``gamma`` is a
nonnegative offset that decays linearly to zero at a target time.  The
top-level barrier is the log-sum-exp smooth minimum of the component
barriers that are active at ``t``.
"""

from dataclasses import dataclass, field

import numpy as np

from .formula import (
    Always,
    And,
    Atom,
    Eventually,
    FormulaError,
    TrueFormula,
    Until,
    conjuncts,
    is_state_formula,
    to_text,
)


class BarrierCompilationError(FormulaError):
    pass


def smooth_min(values, smoothing=1.0):
    """``-(1/k) ln sum exp(-k v_i)``; always <= min(values)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return np.inf
    m = np.min(v)
    if not np.isfinite(m):
        return m
    return float(m - np.log(np.sum(np.exp(-smoothing * (v - m)))) / smoothing)


def smooth_min_weights(values, smoothing=1.0):
    """Partial derivatives of :func:`smooth_min` (a softmax of ``-k v``)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return v
    z = np.exp(-smoothing * (v - np.min(v)))
    return z / np.sum(z)


class StateFunction:
    """``h(g)`` for a non-temporal formula, smooth-min for conjunctions."""

    def __init__(self, node, smoothing):
        self.node = node
        self.smoothing = smoothing
        if isinstance(node, And):
            self.children = [StateFunction(c, smoothing) for c in node.children
                             if not isinstance(c, TrueFormula)]
        elif isinstance(node, (Atom, TrueFormula)):
            self.children = []
        else:
            raise BarrierCompilationError(f"{to_text(node)} is not a state formula")

    @property
    def is_true(self):
        return isinstance(self.node, TrueFormula) or (isinstance(self.node, And) and not self.children)

    @property
    def h_max(self):
        if isinstance(self.node, Atom):
            return np.inf if self.node.negated else self.node.predicate.h_max
        if self.is_true:
            return np.inf
        return min(c.h_max for c in self.children)

    def value(self, g):
        if isinstance(self.node, Atom):
            h = float(self.node.predicate.value(g))
            return -h if self.node.negated else h
        if self.is_true:
            return np.inf
        return smooth_min([c.value(g) for c in self.children], self.smoothing)

    def gradient(self, g):
        if isinstance(self.node, Atom):
            grad = self.node.predicate.gradient(g)
            return -grad if self.node.negated else grad
        if self.is_true:
            return np.zeros_like(np.asarray(g, dtype=float))
        vals = [c.value(g) for c in self.children]
        w = smooth_min_weights(vals, self.smoothing)
        return sum(wi * c.gradient(g) for wi, c in zip(w, self.children))


@dataclass
class TimeVaryingBarrier:
    """One component ``b(g, t) = h(g) + gamma0 * max(0, 1 - t / t_zero)``."""

    label: str
    state: StateFunction
    gamma0: float
    t_zero: float
    t_start: float
    t_end: float
    kind: str = "eventually"

    @property
    def active_window(self):
        return (self.t_start, self.t_end)

    def is_active(self, t):
        return self.t_start - 1e-9 <= t <= self.t_end + 1e-9

    def offset(self, t):
        if self.t_zero <= 0:
            return 0.0
        return self.gamma0 * max(0.0, 1.0 - t / self.t_zero)

    def offset_rate(self, t):
        if self.t_zero <= 0 or t >= self.t_zero:
            return 0.0
        return -self.gamma0 / self.t_zero

    def value(self, g, t):
        return self.state.value(g) + self.offset(t)

    def spatial_gradient(self, g, t):
        return self.state.gradient(g)

    def time_derivative(self, g, t):
        return self.offset_rate(t)


@dataclass
class FormulaBarrier:
    """Smooth conjunction of the component barriers active at ``t``."""

    components: list
    smoothing: float = 1.0
    t_star: dict = field(default_factory=dict)

    def active(self, t):
        return [c for c in self.components if c.is_active(t)]

    def component_values(self, g, t):
        return {c.label: (c.value(g, t) if c.is_active(t) else np.nan) for c in self.components}

    def value(self, g, t):
        act = self.active(t)
        return smooth_min([c.value(g, t) for c in act], self.smoothing)

    def _weights(self, g, t):
        act = self.active(t)
        return act, smooth_min_weights([c.value(g, t) for c in act], self.smoothing)

    def spatial_gradient(self, g, t):
        act, w = self._weights(g, t)
        if not act:
            return np.zeros_like(np.asarray(g, dtype=float))
        return sum(wi * c.spatial_gradient(g, t) for wi, c in zip(w, act))

    def time_derivative(self, g, t):
        act, w = self._weights(g, t)
        if not act:
            return 0.0
        return float(sum(wi * c.time_derivative(g, t) for wi, c in zip(w, act)))

    @property
    def active_window(self):
        if not self.components:
            return (0.0, 0.0)
        return (min(c.t_start for c in self.components), max(c.t_end for c in self.components))


def resolve_t_star(policy, a, b, index=0):
    """Target time in ``[a, b]`` for the ``index``-th temporal operator.

    ``policy`` may be a fraction of the window, one of ``"start"``,
    ``"midpoint"``, ``"end"``, a per-operator list of those, or a callable
    ``(a, b) -> t*``.
    """
    if isinstance(policy, (list, tuple)):
        policy = policy[index] if index < len(policy) else policy[-1]
    if callable(policy):
        t = float(policy(a, b))
    else:
        frac = {"start": 0.0, "midpoint": 0.5, "end": 1.0}.get(policy, policy)
        t = a + float(frac) * (b - a)
    if not (a - 1e-12 <= t <= b + 1e-12):
        raise BarrierCompilationError(f"t* = {t:g} lies outside [{a:g}, {b:g}]")
    return t


def _offset0(state, g0):
    """Initial offset so that the component starts at ``b(g0, 0) = h_ref``."""
    h0 = state.value(g0)
    h_ref = state.h_max
    if not np.isfinite(h_ref):
        h_ref = max(h0, 0.0) + 1.0
    return max(h_ref - h0, 0.0)


def compile_barrier(formula, g0, t_star_policy=0.5, smoothing=1.0):
    """Compile ``formula`` into a :class:`FormulaBarrier` anchored at ``g0``."""
    if smoothing <= 0:
        raise BarrierCompilationError("smoothing temperature must be positive")
    g0 = np.asarray(g0, dtype=float)
    components = []
    t_star = {}
    op_index = 0
    for node in conjuncts(formula):
        if isinstance(node, TrueFormula):
            continue
        label = to_text(node)
        if is_state_formula(node):
            st = StateFunction(node, smoothing)
            if not st.is_true:
                components.append(TimeVaryingBarrier(label, st, 0.0, 0.0, 0.0, 0.0, kind="state"))
            continue
        if isinstance(node, Eventually):
            ts = resolve_t_star(t_star_policy, node.a, node.b, op_index)
            op_index += 1
            st = StateFunction(node.child, smoothing)
            if st.is_true:
                continue
            components.append(TimeVaryingBarrier(label, st, _offset0(st, g0), ts, 0.0, node.b, "eventually"))
            t_star[label] = ts
        elif isinstance(node, Always):
            st = StateFunction(node.child, smoothing)
            if st.is_true:
                continue
            gamma0 = _offset0(st, g0) if node.a > 0 else 0.0
            components.append(TimeVaryingBarrier(label, st, gamma0, node.a, 0.0, node.b, "always"))
        elif isinstance(node, Until):
            ts = resolve_t_star(t_star_policy, node.a, node.b, op_index)
            op_index += 1
            right = StateFunction(node.right, smoothing)
            left = StateFunction(node.left, smoothing)
            if not right.is_true:
                components.append(TimeVaryingBarrier(
                    f"{label} :: eventually", right, _offset0(right, g0), ts, 0.0, node.b, "eventually"))
            if not left.is_true:
                components.append(TimeVaryingBarrier(
                    f"{label} :: always", left, 0.0, 0.0, 0.0, ts, "always"))
            t_star[label] = ts
        else:
            raise BarrierCompilationError(f"unsupported node in {label}")

    for c in components:
        if not c.value(g0, 0.0) > 0:
            raise BarrierCompilationError(
                f"initially infeasible: b(g0, 0) = {c.value(g0, 0.0):.4g} <= 0 for sub-formula {c.label}")
    fb = FormulaBarrier(components, smoothing, t_star)
    if components and not fb.value(g0, 0.0) > 0:
        raise BarrierCompilationError(
            f"initially infeasible: smooth conjunction b(g0, 0) = {fb.value(g0, 0.0):.4g} <= 0 "
            f"for {to_text(formula)}")
    return fb
