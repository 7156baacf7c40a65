"""Recursive-descent parser for the textual STL fragment.

Precedence, loosest first: ``&``, ``U[a,b]``, prefix operators
(``F[a,b]``, ``G[a,b]``, ``!``).  ``F``/``G``/``U`` are keywords only
when directly followed by ``[``, so regions may still be called ``F``.
"""

import re

from .formula import (
    Always,
    And,
    Atom,
    Eventually,
    FormulaError,
    TrueFormula,
    Until,
    validate,
)

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[\[\](),&!]))"
)


class StlSyntaxError(FormulaError):
    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            pos += len(text[pos:]) - len(text[pos:].lstrip())
            raise StlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, regions):
        self.tokens = _tokenize(text)
        self.i = 0
        self.regions = regions

    def peek(self, offset=0):
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            raise StlSyntaxError(f"expected {value!r}, found {val or 'end of input'!r}", pos)

    def is_temporal(self, letter):
        kind, val, _ = self.peek()
        return kind == "name" and val == letter and self.peek(1)[1] == "["

    def parse(self):
        node = self.conjunction()
        kind, val, pos = self.peek()
        if kind != "end":
            raise StlSyntaxError(f"unexpected token {val!r}", pos)
        return node

    def conjunction(self):
        parts = [self.until()]
        while self.peek()[1] == "&":
            self.take()
            parts.append(self.until())
        if len(parts) == 1:
            return parts[0]
        flat = []
        for p in parts:
            flat.extend(p.children if isinstance(p, And) else [p])
        return And(tuple(flat))

    def until(self):
        left = self.unary()
        if self.is_temporal("U"):
            self.take()
            a, b = self.interval()
            right = self.unary()
            return Until(a, b, left, right)
        return left

    def interval(self):
        _, _, pos = self.peek()
        self.expect("[")
        a = self.number()
        self.expect(",")
        b = self.number()
        self.expect("]")
        if a > b:
            raise StlSyntaxError(f"interval [{a:g}, {b:g}] has a > b", pos)
        return a, b

    def number(self):
        kind, val, pos = self.take()
        if kind != "num":
            raise StlSyntaxError(f"expected a number, found {val or 'end of input'!r}", pos)
        return float(val)

    def unary(self):
        kind, val, pos = self.peek()
        if self.is_temporal("F") or self.is_temporal("G"):
            self.take()
            a, b = self.interval()
            child = self.unary()
            return Eventually(a, b, child) if val == "F" else Always(a, b, child)
        if val == "!":
            self.take()
            inner = self.unary()
            if not isinstance(inner, Atom) or inner.negated:
                raise StlSyntaxError("negation may only apply to a region predicate", pos)
            return Atom(inner.predicate, negated=True)
        if val == "(":
            self.take()
            node = self.conjunction()
            self.expect(")")
            return node
        if kind == "name":
            self.take()
            if val == "true":
                return TrueFormula()
            if val not in self.regions:
                raise StlSyntaxError(f"unknown region {val!r}", pos)
            return Atom(self.regions[val])
        raise StlSyntaxError(f"unexpected token {val or 'end of input'!r}", pos)


def parse_stl(text, regions=None):
    """Parse ``text`` into a formula AST; ``regions`` maps names to predicates.

    An empty string parses to ``true``.
    """
    if not text.strip():
        return TrueFormula()
    node = _Parser(text, regions or {}).parse()
    try:
        return validate(node)
    except StlSyntaxError:
        raise
    except FormulaError as exc:
        raise StlSyntaxError(str(exc), 0) from None
