"""Parsers for coefficient expression strings and form files.

Both use Python's ``ast`` module for tokenizing and precedence, then walk
the tree with an explicit whitelist, so no user text is ever executed.
``^`` is read as exponentiation.
"""
from __future__ import annotations

import ast
import math
import numbers
import re
from dataclasses import dataclass, field

import numpy as np

from femkit import reference
from femkit.element import FiniteElement, MixedElement, VectorElement
from femkit.errors import (BadComponentCount, FemkitError, FormSyntaxError, ShapeMismatch,
                           UnknownIdentifier)
from femkit.form import algorithms, expr
from femkit.form.expr import (Argument, CellSize, Coefficient, Constant, Expr, FacetNormal,
                              SpatialCoordinate)
from femkit.form.form import Form, dS, ds, dx

EXPRESSION_FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs")
MAX_GDIM = 3


def _syntax_error(exc: SyntaxError, line_offset=0):
    return FormSyntaxError(exc.msg, (exc.lineno or 1) + line_offset, exc.offset or 0)


def _parse(text, mode):
    try:
        return ast.parse(text.replace("^", "**"), mode=mode)
    except SyntaxError as exc:
        raise _syntax_error(exc) from None


# ---------------------------------------------------------------------------
# expression strings
# ---------------------------------------------------------------------------
class _ExpressionBuilder:
    def __init__(self, gdim):
        self.x = SpatialCoordinate(gdim)
        self.gdim = gdim

    def fail(self, node, msg):
        raise FormSyntaxError(msg, getattr(node, "lineno", 1), getattr(node, "col_offset", 0))

    def build(self, node):
        if isinstance(node, ast.Expression):
            return self.build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, numbers.Real) \
                and not isinstance(node.value, bool):
            return expr.literal(float(node.value))
        if isinstance(node, ast.Name):
            if node.id == "pi":
                return expr.literal(math.pi)
            if node.id == "e":
                return expr.literal(math.e)
            raise UnknownIdentifier(f"unknown identifier {node.id!r} at line {node.lineno}")
        if isinstance(node, ast.BinOp):
            a, b = self.build(node.left), self.build(node.right)
            op = type(node.op)
            if op is ast.Add:
                return a + b
            if op is ast.Sub:
                return a - b
            if op is ast.Mult:
                return a * b
            if op is ast.Div:
                return a / b
            if op is ast.Pow:
                if not expr.is_literal(b):
                    self.fail(node, "exponent must be a number")
                return expr.power(a, float(b.value))
            self.fail(node, f"unsupported operator {op.__name__}")
        if isinstance(node, ast.UnaryOp):
            a = self.build(node.operand)
            if isinstance(node.op, ast.USub):
                return -a
            if isinstance(node.op, ast.UAdd):
                return a
            self.fail(node, "unsupported unary operator")
        if isinstance(node, ast.Call) and getattr(node.func, "id", None) == "pow":
            if len(node.args) != 2 or node.keywords:
                self.fail(node, "pow takes exactly two arguments")
            b = self.build(node.args[1])
            if not expr.is_literal(b):
                self.fail(node, "exponent must be a number")
            return expr.power(self.build(node.args[0]), float(b.value))
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in EXPRESSION_FUNCTIONS:
                name = getattr(node.func, "id", "?")
                raise UnknownIdentifier(f"unknown function {name!r} at line {node.lineno}")
            if len(node.args) != 1 or node.keywords:
                self.fail(node, f"{node.func.id} takes exactly one argument")
            return expr.call(node.func.id, self.build(node.args[0]))
        if isinstance(node, ast.Subscript):
            if not (isinstance(node.value, ast.Name) and node.value.id == "x"):
                self.fail(node, "only x[i] may be indexed")
            idx = node.slice
            if not (isinstance(idx, ast.Constant) and isinstance(idx.value, int)):
                self.fail(node, "x index must be an integer")
            if not 0 <= idx.value < self.gdim:
                raise ShapeMismatch(f"x[{idx.value}] out of range for dimension {self.gdim}")
            return self.x[idx.value]
        self.fail(node, f"unsupported syntax {type(node).__name__}")


def parse_expression(text, value_shape=None, gdim=MAX_GDIM):
    """Parse ``text`` (a string, or a tuple/list of strings for a vector) into
    an expression over ``x = SpatialCoordinate(gdim)``.

    ``value_shape`` is checked against the component count when given.
    """
    if isinstance(text, (tuple, list)):
        comps = [parse_expression(t, (), gdim) for t in text]
        shape = (len(comps),)
        if value_shape is not None and tuple(value_shape) != shape:
            raise BadComponentCount(f"expected shape {tuple(value_shape)}, got {len(comps)} components")
        return expr.as_vector(comps)
    if not isinstance(text, str):
        raise TypeError("expression text must be a string or a tuple of strings")
    tree = _parse(text.strip(), "eval")
    if isinstance(tree.body, (ast.Tuple, ast.List)):
        e = expr.as_vector([_ExpressionBuilder(gdim).build(n) for n in tree.body.elts])
    else:
        e = _ExpressionBuilder(gdim).build(tree)
    if value_shape is not None and tuple(value_shape) != e.shape:
        raise BadComponentCount(f"expected shape {tuple(value_shape)}, got {e.shape}")
    return e


def evaluate_spatial(e: Expr, points) -> np.ndarray:
    """Evaluate an expression built only from x, literals and arithmetic at
    physical points ``(npts, gdim)``; returns ``(npts, *e.shape)``."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    npts = X.shape[0]
    memo = {}

    def ev(n):
        k = id(n)
        if k in memo:
            return memo[k]
        t = type(n)
        if isinstance(n, SpatialCoordinate):
            if X.shape[1] < n.dim:
                pad = np.zeros((npts, n.dim - X.shape[1]))
                out = np.hstack([X, pad])
            else:
                out = X[:, :n.dim]
        elif isinstance(n, Constant):
            out = np.broadcast_to(n.value, (npts,) + n.shape)
        elif isinstance(n, expr.Zero):
            out = np.zeros((npts,) + n.shape)
        elif isinstance(n, expr.PointCoefficient):
            out = n.eval_points(X)
        elif t is expr.Sum:
            out = ev(n.children[0]) + ev(n.children[1])
        elif t is expr.Neg:
            out = -ev(n.children[0])
        elif t in (expr.Product, expr.Division):
            a, b = ev(n.children[0]), ev(n.children[1])
            ra, rb = n.children[0].rank, n.children[1].rank
            a = a.reshape(a.shape + (1,) * rb)
            b = b.reshape(b.shape + (1,) * ra)
            out = a * b if t is expr.Product else a / b
        elif t is expr.Power:
            out = np.power(ev(n.children[0]), n.exponent)
        elif t is expr.Call:
            out = expr._NUMPY_FUNCS[n.fn](ev(n.children[0]))
        elif t is expr.Indexed:
            out = ev(n.children[0])[:, n.index]
        elif t is expr.ListTensor:
            out = np.stack([np.broadcast_to(ev(c), (npts,) + c.shape) for c in n.children], axis=1)
        else:
            raise FemkitError(f"cannot evaluate {type(n).__name__} pointwise")
        memo[k] = out
        return out

    return np.broadcast_to(ev(e), (npts,) + e.shape).copy()


# ---------------------------------------------------------------------------
# form files
# ---------------------------------------------------------------------------
_CELLS = {name: name for name in reference.CELL_TDIM}


class _CellSymbol:
    """Cell name usable as ``triangle`` and ``triangle.n``."""

    def __init__(self, name):
        self.name = name
        self.tdim = reference.CELL_TDIM[name]

    @property
    def n(self):
        return FacetNormal(self.tdim)


class _Deferred:
    """Built-in whose dimension is taken from the first declared element."""

    def __init__(self, factory):
        self.factory = factory


@dataclass
class ParsedForms:
    elements: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)
    forms: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    arguments: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.elements, self.coefficients, self.forms))


FORM_NAMES = ("a", "L", "M", "F")


class _FormFileEvaluator:
    def __init__(self):
        self.env = {}
        self.result = ParsedForms()
        self.cell_tdim = None
        self.line = 1

    # namespace -----------------------------------------------------------
    def _element(self, family, cell, degree, dim=None, vector=False):
        cell = cell.name if isinstance(cell, _CellSymbol) else cell
        if vector:
            e = VectorElement(family, cell, degree, dim)
        else:
            e = FiniteElement(family, cell, degree)
        self._note_cell(e)
        return e

    def _note_cell(self, e):
        if self.cell_tdim is None:
            self.cell_tdim = e.tdim

    def builtins(self):
        def arg_split(number):
            def f(e):
                return _split_argument(Argument(number, e))
            return f

        def constant(value=0.0, *rest):
            if isinstance(value, _CellSymbol):
                value = 0.0
            return Constant(value, name="_constant")

        def mixed(*elements):
            m = MixedElement(*elements)
            self._note_cell(m)
            return m

        def coefficient(e):
            return Coefficient(e)

        return {
            **{k: _CellSymbol(v) for k, v in _CELLS.items()},
            "FiniteElement": lambda fam, cell, deg: self._element(fam, cell, deg),
            "VectorElement": lambda fam, cell, deg, dim=None: self._element(fam, cell, deg, dim, True),
            "MixedElement": mixed,
            "TestFunction": lambda e: Argument(0, e),
            "TrialFunction": lambda e: Argument(1, e),
            "TestFunctions": arg_split(0),
            "TrialFunctions": arg_split(1),
            "Argument": lambda e, number: Argument(number, e),
            "Coefficient": coefficient,
            "Function": coefficient,
            "Constant": constant,
            "FacetNormal": _Deferred(lambda d: FacetNormal(d)),
            "CellSize": _Deferred(lambda d: CellSize()),
            "SpatialCoordinate": _Deferred(lambda d: SpatialCoordinate(d)),
            "Identity": expr.Identity,
            "dot": expr.dot, "inner": expr.inner, "outer": expr.outer, "grad": expr.grad,
            "div": expr.div_, "jump": expr.jump, "avg": expr.avg, "tr": expr.trace,
            "sin": expr.sin, "cos": expr.cos, "exp": expr.exp, "sqrt": expr.sqrt, "abs": expr.abs_,
            "as_vector": expr.as_vector, "as_matrix": expr.as_matrix,
            "lhs": algorithms.lhs, "rhs": algorithms.rhs, "derivative": algorithms.derivative,
            "action": algorithms.action,
            "dx": dx, "ds": ds, "dS": dS, "pi": math.pi,
        }

    def resolve_deferred(self, value, node):
        if isinstance(value, _Deferred):
            if self.cell_tdim is None:
                raise FormSyntaxError("built-in used before any element is declared",
                                      node.lineno, node.col_offset)
            return value.factory(self.cell_tdim)
        return value

    # evaluation ----------------------------------------------------------
    def fail(self, node, msg):
        raise FormSyntaxError(msg, getattr(node, "lineno", self.line), getattr(node, "col_offset", 0))

    def ev(self, node):
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (numbers.Real, str)):
                self.fail(node, f"unsupported literal {node.value!r}")
            return node.value
        if isinstance(node, ast.Name):
            if node.id in self.env:
                return self.resolve_deferred(self.env[node.id], node)
            raise UnknownIdentifier(f"unknown identifier {node.id!r} at line {node.lineno}")
        if isinstance(node, ast.Attribute):
            base = self.ev(node.value)
            if isinstance(base, _CellSymbol) and node.attr == "n":
                return base.n
            self.fail(node, f"unsupported attribute {node.attr!r}")
        if isinstance(node, (ast.Tuple, ast.List)):
            return tuple(self.ev(e) for e in node.elts)
        if isinstance(node, ast.BinOp):
            a, b = self.ev(node.left), self.ev(node.right)
            ops = {ast.Add: lambda: a + b, ast.Sub: lambda: a - b, ast.Mult: lambda: a * b,
                   ast.Div: lambda: a / b, ast.Pow: lambda: a ** b}
            fn = ops.get(type(node.op))
            if fn is None:
                self.fail(node, f"unsupported operator {type(node.op).__name__}")
            return self._apply(node, fn)
        if isinstance(node, ast.UnaryOp):
            a = self.ev(node.operand)
            if isinstance(node.op, ast.USub):
                return self._apply(node, lambda: -a)
            if isinstance(node.op, ast.UAdd):
                return a
            self.fail(node, "unsupported unary operator")
        if isinstance(node, ast.Call):
            fn = self.env.get(node.func.id) if isinstance(node.func, ast.Name) else None
            if isinstance(node.func, ast.Name) and node.func.id not in self.env:
                raise UnknownIdentifier(f"unknown identifier {node.func.id!r} at line {node.lineno}")
            if isinstance(fn, _Deferred):
                return self.resolve_deferred(fn, node)
            if fn is None:
                fn = self.ev(node.func)
            args = [self.ev(a) for a in node.args]
            kwargs = {k.arg: self.ev(k.value) for k in node.keywords}
            if not callable(fn):
                self.fail(node, "object is not callable")
            return self._apply(node, lambda: fn(*args, **kwargs))
        if isinstance(node, ast.Subscript):
            base = self.ev(node.value)
            idx = self.ev(node.slice)
            return self._apply(node, lambda: base[idx])
        self.fail(node, f"unsupported syntax {type(node).__name__}")

    def _apply(self, node, fn):
        try:
            out = fn()
        except FemkitError:
            raise
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            self.fail(node, str(exc))
        if out is NotImplemented:
            self.fail(node, "unsupported operand types")
        return out

    def assign(self, target, value, node):
        if isinstance(target, ast.Name):
            name = target.id
            if isinstance(value, numbers.Real) and not isinstance(value, bool):
                value = Constant(float(value), name=name)
            elif isinstance(value, Constant) and value.name == "_constant":
                value.name = name
            if isinstance(value, Coefficient) and value.name.startswith("w"):
                value.name = name
            self.env[name] = value
            r = self.result
            if isinstance(value, Form):
                value.name = name
                r.forms[name] = value
            elif hasattr(value, "descriptor") and hasattr(value, "space_dim"):
                r.elements[name] = value
            elif isinstance(value, Coefficient):
                r.coefficients[name] = value
            elif isinstance(value, Constant) and not value.is_literal:
                r.constants[name] = value
            elif isinstance(value, Argument):
                r.arguments[name] = value
            return
        if isinstance(target, (ast.Tuple, ast.List)):
            if not isinstance(value, (tuple, list)) or len(value) != len(target.elts):
                self.fail(node, "tuple assignment size mismatch")
            for t, v in zip(target.elts, value):
                self.assign(t, v, node)
            return
        self.fail(node, "unsupported assignment target")

    def run(self, text):
        self.env = self.builtins()
        source = re.sub(r"^(\s*)element\s+(?=[A-Za-z_]\w*\s*=)", r"\1", text, flags=re.M)
        try:
            tree = ast.parse(source.replace("^", "**"), mode="exec")
        except SyntaxError as exc:
            raise _syntax_error(exc) from None
        for stmt in tree.body:
            self.line = stmt.lineno
            if isinstance(stmt, ast.Assign) and len(stmt.targets) == 1:
                value = self.ev(stmt.value)
                self.assign(stmt.targets[0], value, stmt)
            elif isinstance(stmt, ast.Expr) and isinstance(stmt.value, ast.Constant) \
                    and isinstance(stmt.value.value, str):
                continue  # docstring
            else:
                self.fail(stmt, f"unsupported statement {type(stmt).__name__}")
        return self.result


def _split_argument(arg):
    """Per-sub-element components of an argument on a mixed element."""
    el = arg.element
    if not el.is_compound():
        raise ShapeMismatch("TestFunctions/TrialFunctions require a mixed element")
    out = []
    for i, sub in enumerate(el.sub_elements):
        c0, c1 = el.sub_component_range(i)
        if sub.value_shape == ():
            out.append(arg[c0])
        else:
            out.append(expr.as_vector([arg[c] for c in range(c0, c1)]))
    return tuple(out)


split_argument = _split_argument


def parse_form_file(text: str) -> ParsedForms:
    """Parse a form file; unpacks as ``(elements, coefficients, forms)``."""
    return _FormFileEvaluator().run(text)
