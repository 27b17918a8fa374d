"""Measures, integrals and forms."""
from __future__ import annotations

import numbers
from dataclasses import dataclass

from femkit.errors import ShapeMismatch, UnrestrictedInteriorFacet, UnsupportedExpression
from femkit.form.expr import (Argument, Avg, CellSize, Coefficient, Constant, Expr, FacetNormal,
                              Jump, PointCoefficient, Restricted, Zero, as_expr, mul, neg)

MEASURE_KINDS = ("cell", "exterior_facet", "interior_facet")
_SYMBOLS = {"cell": "dx", "exterior_facet": "ds", "interior_facet": "dS"}


@dataclass(frozen=True)
class Measure:
    kind: str
    subdomain: int | None = None

    def __call__(self, subdomain):
        return Measure(self.kind, None if subdomain is None else int(subdomain))

    def __rmul__(self, integrand):
        if isinstance(integrand, numbers.Real):
            integrand = as_expr(float(integrand))
        if not isinstance(integrand, Expr):
            return NotImplemented
        if isinstance(integrand, Zero) and not integrand.shape:
            return Form([])  # an integral of zero contributes nothing
        return Form([Integral(integrand, self.kind, self.subdomain)])

    def __str__(self):
        s = _SYMBOLS[self.kind]
        return s if self.subdomain is None else f"{s}({self.subdomain})"


dx = Measure("cell")
ds = Measure("exterior_facet")
dS = Measure("interior_facet")

# terminals that are two-valued on an interior facet
_SIDED = (Argument, Coefficient, FacetNormal, CellSize)


def _check_restrictions(e, kind):
    def walk(node, restricted):
        if isinstance(node, Restricted):
            if kind != "interior_facet":
                raise UnsupportedExpression(f"restriction {node} outside an interior-facet integral")
            if restricted:
                raise UnsupportedExpression(f"nested restriction in {node}")
            restricted = True
        elif isinstance(node, (Jump, Avg)):
            if kind != "interior_facet":
                raise UnsupportedExpression(f"{type(node).__name__.lower()} outside an interior-facet integral")
            restricted = True
        elif isinstance(node, _SIDED) and kind == "interior_facet" and not restricted:
            raise UnrestrictedInteriorFacet(f"{node} must be restricted ('+' or '-') in a dS integral")
        for c in node.children:
            walk(c, restricted)

    walk(e, False)


@dataclass(frozen=True)
class Integral:
    integrand: Expr
    kind: str
    subdomain: int | None = None

    def __post_init__(self):
        if self.kind not in MEASURE_KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.integrand.shape != ():
            raise ShapeMismatch(f"integrand must be scalar, got shape {self.integrand.shape}")
        _check_restrictions(self.integrand, self.kind)

    @property
    def measure(self):
        return Measure(self.kind, self.subdomain)

    def with_integrand(self, integrand):
        return Integral(integrand, self.kind, self.subdomain)

    def __str__(self):
        return f"({self.integrand})*{self.measure}"


class Form:
    """Sum of integrals. Arity is checked by :func:`femkit.form.check_form`."""

    def __init__(self, integrals):
        self.integrals = tuple(integrals)
        self.name = None

    # algebra -------------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Form):
            return Form(self.integrals + other.integrals)
        if isinstance(other, numbers.Real) and other == 0:
            return self
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Form):
            return self + (-other)
        return NotImplemented

    def __neg__(self):
        return Form([i.with_integrand(neg(i.integrand)) for i in self.integrals])

    def __rmul__(self, scalar):
        s = as_expr(scalar)
        if s.shape:
            raise ShapeMismatch("forms can only be scaled by scalars")
        return Form([i.with_integrand(mul(s, i.integrand)) for i in self.integrals])

    __mul__ = __rmul__

    # queries -------------------------------------------------------------
    def _terminals(self, cls):
        seen, out = set(), []
        for itg in self.integrals:
            for t in itg.integrand.terminals():
                if isinstance(t, cls) and t.key not in seen:
                    seen.add(t.key)
                    out.append(t)
        return out

    def arguments(self):
        return sorted(self._terminals(Argument), key=lambda a: a.number)

    def coefficients(self):
        """Coefficients (finite-element and pointwise) in order of appearance."""
        return [t for t in self._terminals((Coefficient, PointCoefficient))]

    def constants(self):
        return [c for c in self._terminals(Constant) if not c.is_literal]

    @property
    def rank(self):
        return len({a.number for a in self.arguments()})

    def is_empty(self):
        return not self.integrals

    def __str__(self):
        return " + ".join(str(i) for i in self.integrals) if self.integrals else "0"

    __repr__ = __str__
