"""Abstract syntax for the STL fragment handled by this package.

::

    psi ::= true | mu | !mu | psi & psi
    phi ::= psi | G[a,b] psi | F[a,b] psi | psi U[a,b] psi | phi & phi
"""

from dataclasses import dataclass

import numpy as np

REACH = "reach"
STAY = "stay"
HALFSPACE = "halfspace"


class FormulaError(ValueError):
    pass


@dataclass(frozen=True)
class Predicate:
    """Region predicate ``h(y) >= 0``.

    reach/stay: ``h = radius - ||y - center||`` (the two kinds only differ in
    how the task uses them); halfspace: ``h = normal . y - offset``.
    """

    name: str
    kind: str
    center: tuple = None
    radius: float = None
    normal: tuple = None
    offset: float = 0.0

    def __post_init__(self):
        if self.kind in (REACH, STAY):
            if self.center is None or self.radius is None or not self.radius > 0:
                raise FormulaError(f"region {self.name!r} needs a center and a positive radius")
            object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        elif self.kind == HALFSPACE:
            n = np.asarray(self.normal, dtype=float)
            if abs(np.linalg.norm(n) - 1.0) > 1e-9:
                raise FormulaError(f"halfspace {self.name!r} normal must have unit length")
            object.__setattr__(self, "normal", tuple(float(c) for c in n))
        else:
            raise FormulaError(f"unknown predicate kind {self.kind!r}")

    @property
    def dimension(self):
        return len(self.center) if self.kind != HALFSPACE else len(self.normal)

    @property
    def h_max(self):
        """Supremum of ``h`` (infinite for halfspaces)."""
        return self.radius if self.kind != HALFSPACE else np.inf

    def value(self, y):
        """``h`` at one point or at every row of an array of points."""
        y = np.asarray(y, dtype=float)
        if self.kind == HALFSPACE:
            return y @ np.asarray(self.normal) - self.offset
        return self.radius - np.linalg.norm(y - np.asarray(self.center), axis=-1)

    def gradient(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == HALFSPACE:
            return np.asarray(self.normal, dtype=float)
        d = y - np.asarray(self.center)
        n = np.linalg.norm(d)
        if n == 0.0:
            return np.zeros_like(d)
        return -d / n


@dataclass(frozen=True)
class TrueFormula:
    pass


@dataclass(frozen=True)
class Atom:
    predicate: Predicate
    negated: bool = False


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Eventually:
    a: float
    b: float
    child: object


@dataclass(frozen=True)
class Always:
    a: float
    b: float
    child: object


@dataclass(frozen=True)
class Until:
    a: float
    b: float
    left: object
    right: object


TEMPORAL = (Eventually, Always, Until)


def is_state_formula(node):
    """True for psi-class (non-temporal) formulas."""
    if isinstance(node, (TrueFormula, Atom)):
        return True
    if isinstance(node, And):
        return all(is_state_formula(c) for c in node.children)
    return False


def validate(node):
    """Raise :class:`FormulaError` if ``node`` is outside the fragment."""
    if is_state_formula(node):
        return node
    if isinstance(node, (Eventually, Always)):
        _check_interval(node.a, node.b)
        if not is_state_formula(node.child):
            raise FormulaError("temporal operators may only wrap non-temporal formulas")
    elif isinstance(node, Until):
        _check_interval(node.a, node.b)
        if not (is_state_formula(node.left) and is_state_formula(node.right)):
            raise FormulaError("until operands must be non-temporal formulas")
    elif isinstance(node, And):
        for c in node.children:
            validate(c)
    else:
        raise FormulaError(f"not a formula node: {node!r}")
    return node


def _check_interval(a, b):
    if not (0 <= a <= b):
        raise FormulaError(f"invalid interval [{a}, {b}]")


def horizon(node):
    """Length of signal (after the evaluation time) the formula depends on."""
    if isinstance(node, (TrueFormula, Atom)):
        return 0.0
    if isinstance(node, And):
        return max((horizon(c) for c in node.children), default=0.0)
    if isinstance(node, (Eventually, Always)):
        return node.b + horizon(node.child)
    if isinstance(node, Until):
        return node.b + max(horizon(node.left), horizon(node.right))
    raise FormulaError(f"not a formula node: {node!r}")


def conjuncts(node):
    """Top-level conjuncts of ``node`` (flattened)."""
    if isinstance(node, And):
        out = []
        for c in node.children:
            out.extend(conjuncts(c))
        return out
    return [node]


def predicates(node):
    """Predicates referenced by ``node``, in order of appearance."""
    if isinstance(node, Atom):
        return [node.predicate]
    if isinstance(node, And):
        return [p for c in node.children for p in predicates(c)]
    if isinstance(node, (Eventually, Always)):
        return predicates(node.child)
    if isinstance(node, Until):
        return predicates(node.left) + predicates(node.right)
    return []


def to_text(node):
    """Render ``node`` in the concrete syntax accepted by the parser."""
    if isinstance(node, TrueFormula):
        return "true"
    if isinstance(node, Atom):
        return ("!" if node.negated else "") + node.predicate.name
    if isinstance(node, And):
        return " & ".join(_paren(c) for c in node.children)
    if isinstance(node, Eventually):
        return f"F[{_num(node.a)},{_num(node.b)}] {_paren(node.child)}"
    if isinstance(node, Always):
        return f"G[{_num(node.a)},{_num(node.b)}] {_paren(node.child)}"
    if isinstance(node, Until):
        return f"{_paren(node.left)} U[{_num(node.a)},{_num(node.b)}] {_paren(node.right)}"
    raise FormulaError(f"not a formula node: {node!r}")


def _paren(node):
    text = to_text(node)
    return f"({text})" if isinstance(node, (And, Until)) else text


def _num(x):
    return f"{x:g}"
