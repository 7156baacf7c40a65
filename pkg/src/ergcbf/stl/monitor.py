"""Quantitative semantics and completion times over uniformly sampled signals."""

import math
from dataclasses import dataclass

import numpy as np

from .formula import (
    Always,
    And,
    Atom,
    Eventually,
    FormulaError,
    TrueFormula,
    Until,
    horizon,
)

_TOL = 1e-9


class InsufficientDataError(FormulaError):
    pass


@dataclass
class Signal:
    """Points ``values[k]`` sampled at ``t0 + k * dt``."""

    values: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.dt <= 0:
            raise ValueError("sampling period must be positive")

    @classmethod
    def from_times(cls, times, values):
        times = np.asarray(times, dtype=float)
        if times.size < 2:
            return cls(values, 1.0, float(times[0]) if times.size else 0.0)
        dt = (times[-1] - times[0]) / (times.size - 1)
        if np.max(np.abs(np.diff(times) - dt)) > 1e-6 * max(dt, 1.0):
            raise ValueError("signal must be uniformly sampled")
        return cls(values, dt, float(times[0]))

    def __len__(self):
        return self.values.shape[0]

    def index(self, t):
        return int(round((t - self.t0) / self.dt))

    def time(self, k):
        return self.t0 + k * self.dt

    def window(self, k, a, b):
        lo = k + math.ceil(a / self.dt - _TOL)
        hi = k + math.floor(b / self.dt + _TOL)
        return lo, hi


def state_robustness(node, values):
    """Robustness of a non-temporal formula at every sample."""
    n = values.shape[0]
    if isinstance(node, TrueFormula):
        return np.full(n, np.inf)
    if isinstance(node, Atom):
        h = np.asarray(node.predicate.value(values), dtype=float).reshape(n)
        return -h if node.negated else h
    if isinstance(node, And):
        return np.min([state_robustness(c, values) for c in node.children], axis=0)
    raise FormulaError(f"{type(node).__name__} is not a state formula")


def _require(signal, k, node):
    last = k + math.floor(horizon(node) / signal.dt + _TOL)
    if k < 0 or last >= len(signal):
        raise InsufficientDataError(
            f"formula needs the signal up to t = {signal.time(last):g} s, "
            f"but it ends at t = {signal.time(len(signal) - 1):g} s"
        )


def _rho(node, signal, k, cache):
    if isinstance(node, (TrueFormula, Atom)):
        return float(_cached(node, signal, cache)[k])
    if isinstance(node, And):
        return min(_rho(c, signal, k, cache) for c in node.children)
    lo, hi = signal.window(k, node.a, node.b)
    if isinstance(node, Eventually):
        return float(np.max(_cached(node.child, signal, cache)[lo:hi + 1]))
    if isinstance(node, Always):
        return float(np.min(_cached(node.child, signal, cache)[lo:hi + 1]))
    if isinstance(node, Until):
        left = _cached(node.left, signal, cache)
        right = _cached(node.right, signal, cache)
        prefix = np.minimum.accumulate(left[k:hi + 1])
        cand = np.minimum(right[lo:hi + 1], prefix[lo - k:])
        return float(np.max(cand))
    raise FormulaError(f"not a formula node: {node!r}")


def _cached(node, signal, cache):
    key = id(node)
    if key not in cache:
        cache[key] = state_robustness(node, signal.values)
    return cache[key]


def robustness(signal, formula, t=0.0):
    """Robustness of ``formula`` on ``signal`` at time ``t``."""
    k = signal.index(t)
    _require(signal, k, formula)
    return _rho(formula, signal, k, {})


def completion_time(signal, formula, mode="determined"):
    """Earliest time the sampled prefix settles satisfaction, or ``None``.

    ``mode="determined"`` waits for every always-window to elapse;
    ``mode="witnessed"`` only requires every eventually/until to have a
    witness (always-windows must still hold over the whole signal, but do
    not delay completion).
    """
    if mode not in ("determined", "witnessed"):
        raise ValueError(f"unknown completion mode {mode!r}")
    _require(signal, 0, formula)
    idx = _done(formula, signal, 0, {}, mode)
    return None if idx is None else signal.time(idx)


def _done(node, signal, k, cache, mode):
    if isinstance(node, (TrueFormula, Atom)):
        return k if _cached(node, signal, cache)[k] >= 0 else None
    if isinstance(node, And):
        parts = [_done(c, signal, k, cache, mode) for c in node.children]
        return None if any(p is None for p in parts) else max(parts, default=k)
    lo, hi = signal.window(k, node.a, node.b)
    if isinstance(node, Eventually):
        hits = np.flatnonzero(_cached(node.child, signal, cache)[lo:hi + 1] >= 0)
        return None if hits.size == 0 else lo + int(hits[0])
    if isinstance(node, Always):
        if np.all(_cached(node.child, signal, cache)[lo:hi + 1] >= 0):
            return hi if mode == "determined" else lo
        return None
    if isinstance(node, Until):
        left_ok = np.logical_and.accumulate(_cached(node.left, signal, cache)[k:hi + 1] >= 0)
        right_ok = _cached(node.right, signal, cache)[lo:hi + 1] >= 0
        hits = np.flatnonzero(right_ok & left_ok[lo - k:])
        return None if hits.size == 0 else lo + int(hits[0])
    raise FormulaError(f"not a formula node: {node!r}")
