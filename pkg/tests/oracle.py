"""Independent reference evaluators used by the test-suite.

Nothing here goes through the compiler: quadrature comes from numpy's
Gauss-Legendre nodes (collapsed onto simplices), geometry is recomputed
from vertex coordinates, and integrands are interpreted node by node for
one basis-function pair at a time. Only the reference elements are shared
with the code under test (they have their own nodality tests).
"""
from __future__ import annotations

import itertools
from math import factorial

import numpy as np
from numpy.polynomial.legendre import leggauss

from femkit import reference
from femkit.form.expr import (Argument, Avg, Call, CellSize, Coefficient, Constant, Div, Division,
                              Dot, FacetNormal, Grad, Identity, Indexed, Inner, Jump, ListTensor,
                              Neg, Outer, PointCoefficient, Power, Product, Restricted,
                              SpatialCoordinate, Sum, Trace, Zero)

FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
         "sign": np.sign}
DFUNCS = {"sin": np.cos, "cos": lambda t: -np.sin(t), "exp": np.exp,
          "sqrt": lambda t: 0.5 / np.sqrt(t), "abs": np.sign, "sign": np.zeros_like}


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------
def _gl01(m):
    t, w = leggauss(m)
    return 0.5 * (t + 1.0), 0.5 * w


def simplex_rule(tdim, degree):
    """Collapsed Gauss-Legendre rule on the unit simplex, exact to ``degree``."""
    if tdim == 0:
        return np.zeros((1, 0)), np.ones(1)
    m = degree // 2 + 2
    a, wa = _gl01(m)
    if tdim == 1:
        return a[:, None], wa
    if tdim == 2:
        A, B = np.meshgrid(a, a, indexing="ij")
        W = np.outer(wa, wa) * (1 - B)
        return np.column_stack([(A * (1 - B)).ravel(), B.ravel()]), W.ravel()
    A, B, C = np.meshgrid(a, a, a, indexing="ij")
    W = np.einsum("i,j,k->ijk", wa, wa, wa) * (1 - B) * (1 - C) ** 2
    pts = np.column_stack([(A * (1 - B) * (1 - C)).ravel(), (B * (1 - C)).ravel(), C.ravel()])
    return pts, W.ravel()


def monomial_integral(exponents):
    """Exact integral of prod x_i^a_i over the unit simplex: prod a_i! / (sum a + d)!."""
    num = np.prod([factorial(a) for a in exponents])
    return num / factorial(sum(exponents) + len(exponents))


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------
class Side:
    """Geometry of one cell as seen from a facet or the cell itself."""

    def __init__(self, coords):
        self.X = np.asarray(coords, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.J = (self.X[1:] - self.X[0]).T
        self.Jinv = np.linalg.inv(self.J)
        self.detJ = abs(np.linalg.det(self.J))
        self.h = max(np.linalg.norm(p - q) for p, q in itertools.combinations(self.X, 2))
        self.normal = None

    def pull_back(self, x):
        xi = (x - self.X[0]) @ self.Jinv.T
        return np.clip(xi, 0.0, 1.0)


def facet_measure(P):
    """Measure of the simplex with vertex rows ``P`` (dimension ``len(P) - 1``)."""
    if len(P) == 1:
        return 1.0
    E = P[1:] - P[0]
    return np.sqrt(abs(np.linalg.det(E @ E.T))) / factorial(len(P) - 1)


def outward_normal(P_facet, opposite):
    d = P_facet.shape[1]
    if d == 1:
        n = np.sign(P_facet[0] - opposite)
        return n.astype(float)
    E = P_facet[1:] - P_facet[0]
    if d == 2:
        n = np.array([E[0, 1], -E[0, 0]])
    else:
        n = np.cross(E[0], E[1])
    n = n / np.linalg.norm(n)
    if np.dot(n, P_facet[0] - opposite) < 0:
        n = -n
    return n


def facet_points(P_facet, degree):
    """Physical quadrature points and weights on a facet with vertex rows ``P_facet``."""
    d = len(P_facet) - 1
    s, w = simplex_rule(d, degree)
    lam = np.column_stack([1.0 - s.sum(axis=1), s]) if d else np.ones((1, 1))
    return lam @ P_facet, w * facet_measure(P_facet) * factorial(d)


# ---------------------------------------------------------------------------
# interpreter
# ---------------------------------------------------------------------------
class _Context:
    """Evaluation state. ``cache`` and ``tab`` may be shared between
    contexts that differ only in the argument assignment: cached subtree
    values are keyed by the assignment of the arguments they contain."""

    def __init__(self, x, sides, xis, coefficient_values, assignment, cache=None, tab=None):
        self.x = x                    # (Q, gdim)
        self.sides = sides            # {'+': Side, '-': Side}
        self.xis = xis                # reference points per side
        self.coef = coefficient_values
        self.assign = assignment      # {number: (side, local index)}
        self.Q = len(x)
        self._tab = {} if tab is None else tab
        self.cache = {} if cache is None else cache

    def key(self, tag, e, side):
        return (tag, id(e), side) + tuple(self.assign[n] for n in _argument_numbers(e))

    def tab(self, element, side):
        key = (element.descriptor, side)
        if key not in self._tab:
            vals, grads = element.tabulate(self.xis[side], 1)
            Jinv = self.sides[side].Jinv
            self._tab[key] = (vals, grads @ Jinv)
        return self._tab[key]


def _reshape(arr, shape, Q, grad):
    tail = (arr.shape[-1],) if grad else ()
    return arr.reshape((Q,) + tuple(shape) + tail)


def _terminal(e, ctx, side, grad):
    Q = ctx.Q
    gdim = ctx.x.shape[1]
    if isinstance(e, Argument):
        s, i = ctx.assign[e.number]
        vals, grads = ctx.tab(e.element, side)
        arr = (grads if grad else vals)[:, i]
        if s != side:
            arr = np.zeros_like(arr)
        return _reshape(arr, e.shape, Q, grad)
    if isinstance(e, Coefficient):
        vals, grads = ctx.tab(e.element, side)
        w = ctx.coef[e][0 if side == "+" else 1]
        arr = np.einsum("k,qk...->q...", w, grads if grad else vals)
        return _reshape(arr, e.shape, Q, grad)
    if isinstance(e, PointCoefficient):
        if grad:
            raise NotImplementedError("gradient of a point coefficient")
        return np.asarray(e.eval_points(ctx.x), dtype=float).reshape((Q,) + e.shape)
    if isinstance(e, SpatialCoordinate):
        if grad:
            return np.broadcast_to(np.eye(gdim), (Q, gdim, gdim)).copy()
        return ctx.x.copy()
    shape = e.shape + ((gdim,) if grad else ())
    if isinstance(e, (Zero,)):
        return np.zeros((Q,) + shape)
    if isinstance(e, Constant):
        if grad:
            return np.zeros((Q,) + shape)
        return np.broadcast_to(e.value, (Q,) + e.shape).copy()
    if isinstance(e, Identity):
        if grad:
            return np.zeros((Q,) + shape)
        return np.broadcast_to(np.eye(e.dim), (Q, e.dim, e.dim)).copy()
    if isinstance(e, FacetNormal):
        n = ctx.sides[side].normal
        if grad:
            return np.zeros((Q,) + shape)
        return np.broadcast_to(n, (Q, len(n))).copy()
    if isinstance(e, CellSize):
        if grad:
            return np.zeros((Q,) + shape)
        return np.full(Q, ctx.sides[side].h)
    raise NotImplementedError(type(e).__name__)


def _scalar_times(s, t):
    """``s`` (Q,) or (Q, g) scalar-like times ``t`` (Q, ...)."""
    return s.reshape(s.shape + (1,) * (t.ndim - s.ndim)) * t


_ARGNUMS = {}


def _argument_numbers(e):
    k = id(e)
    if k not in _ARGNUMS:
        if isinstance(e, Argument):
            nums = (e.number,)
        else:
            nums = tuple(sorted(set().union(*[_argument_numbers(c) for c in e.children])))
        _ARGNUMS[k] = (e, nums)     # keep e alive so id(e) stays unique
    return _ARGNUMS[k][1]


def _memo(fn):
    tag = fn.__name__

    def wrapper(e, ctx, side="+"):
        key = ctx.key(tag, e, side)
        if key not in ctx.cache:
            ctx.cache[key] = fn(e, ctx, side)
        return ctx.cache[key]

    wrapper.__name__ = tag
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_memo
def ev(e, ctx, side="+"):
    """Values of ``e`` at the context points, shape ``(Q, *e.shape)``."""
    t = type(e)
    if not e.children:
        return _terminal(e, ctx, side, False)
    c = e.children
    if t is Restricted:
        return ev(c[0], ctx, e.side)
    if t is Sum:
        return ev(c[0], ctx, side) + ev(c[1], ctx, side)
    if t is Neg:
        return -ev(c[0], ctx, side)
    if t is Product:
        a, b = ev(c[0], ctx, side), ev(c[1], ctx, side)
        if c[0].shape:
            return a * b.reshape(b.shape + (1,) * (a.ndim - b.ndim))
        return _scalar_times(a, b)
    if t is Division:
        a, b = ev(c[0], ctx, side), ev(c[1], ctx, side)
        return a / b.reshape(b.shape + (1,) * (a.ndim - b.ndim))
    if t is Power:
        return ev(c[0], ctx, side) ** e.exponent
    if t is Call:
        return FUNCS[e.fn](ev(c[0], ctx, side))
    if t is Indexed:
        return ev(c[0], ctx, side)[:, e.index]
    if t is ListTensor:
        return np.stack([ev(k, ctx, side) for k in c], axis=1)
    if t is Dot:
        a, b = ev(c[0], ctx, side), ev(c[1], ctx, side)
        return np.einsum("q...i,qi...->q...", a, b)
    if t is Inner:
        a, b = ev(c[0], ctx, side), ev(c[1], ctx, side)
        return (a * b).reshape(ctx.Q, -1).sum(axis=1)
    if t is Outer:
        a, b = ev(c[0], ctx, side), ev(c[1], ctx, side)
        return (a.reshape(a.shape + (1,) * (b.ndim - 1))
                * b.reshape((ctx.Q,) + (1,) * (a.ndim - 1) + b.shape[1:]))
    if t is Trace:
        return np.trace(ev(c[0], ctx, side), axis1=-2, axis2=-1)
    if t is Grad:
        return evg(c[0], ctx, side)
    if t is Div:
        return np.trace(evg(c[0], ctx, side), axis1=-2, axis2=-1)
    if t is Avg:
        return 0.5 * (ev(c[0], ctx, "+") + ev(c[0], ctx, "-"))
    if t is Jump:
        if len(c) == 1:
            return ev(c[0], ctx, "+") - ev(c[0], ctx, "-")
        out = 0.0
        for s in "+-":
            a, n = ev(c[0], ctx, s), ev(c[1], ctx, s)
            out = out + (_scalar_times(a, n) if not c[0].shape else (a * n).sum(axis=-1))
        return out
    raise NotImplementedError(t.__name__)


@_memo
def evg(e, ctx, side="+"):
    """Physical gradient of ``e``, shape ``(Q, *e.shape, gdim)``."""
    t = type(e)
    if not e.children:
        return _terminal(e, ctx, side, True)
    c = e.children
    if t is Restricted:
        return evg(c[0], ctx, e.side)
    if t is Sum:
        return evg(c[0], ctx, side) + evg(c[1], ctx, side)
    if t is Neg:
        return -evg(c[0], ctx, side)
    if t is Product:
        a, b = ev(c[0], ctx, side), ev(c[1], ctx, side)
        ga, gb = evg(c[0], ctx, side), evg(c[1], ctx, side)
        if c[0].shape:        # tensor * scalar
            a, b, ga, gb = b, a, gb, ga
        # a scalar, b tensor: grad(a b) = b (x) grad a + a grad b
        term1 = b[..., None] * ga.reshape((ctx.Q,) + (1,) * (b.ndim - 1) + ga.shape[-1:])
        return term1 + _scalar_times(a, gb)
    if t is Division:
        a, b = ev(c[0], ctx, side), ev(c[1], ctx, side)
        ga, gb = evg(c[0], ctx, side), evg(c[1], ctx, side)
        bb = b.reshape(b.shape + (1,) * (ga.ndim - 1))
        return ga / bb - a[..., None] * gb.reshape((ctx.Q,) + (1,) * (a.ndim - 1) +
                                                  gb.shape[-1:]) / bb ** 2
    if t is Power:
        a = ev(c[0], ctx, side)
        return (e.exponent * a ** (e.exponent - 1))[:, None] * evg(c[0], ctx, side)
    if t is Call:
        return DFUNCS[e.fn](ev(c[0], ctx, side))[:, None] * evg(c[0], ctx, side)
    if t is Indexed:
        return evg(c[0], ctx, side)[:, e.index]
    if t is ListTensor:
        return np.stack([evg(k, ctx, side) for k in c], axis=1)
    if t is Dot and len(c[0].shape) == 1 and len(c[1].shape) == 1:
        a, b = ev(c[0], ctx, side), ev(c[1], ctx, side)
        ga, gb = evg(c[0], ctx, side), evg(c[1], ctx, side)
        return np.einsum("qi,qij->qj", a, gb) + np.einsum("qi,qij->qj", b, ga)
    raise NotImplementedError(f"gradient of {t.__name__}")


# ---------------------------------------------------------------------------
# element tensors
# ---------------------------------------------------------------------------
def _arguments(integrand):
    found = {}

    def walk(e):
        if isinstance(e, Argument):
            found[e.number] = e.element
        for k in e.children:
            walk(k)

    walk(integrand)
    return found


def _tensor(integrands, x, w, sides, xis, coefficient_values, elements, macro):
    rank = len(elements)
    sizes = [elements[i].space_dim for i in range(rank)]
    shape = tuple((2 * n if macro else n) for n in sizes)
    A = np.zeros(shape)
    cache, tab = {}, {}
    for idx in itertools.product(*[range(n) for n in shape]):
        assign = {}
        for num, i in enumerate(idx):
            n = sizes[num]
            assign[num] = ("+", i) if i < n else ("-", i - n)
        ctx = _Context(x, sides, xis, coefficient_values, assign, cache, tab)
        val = 0.0
        for f in integrands:
            val += float(np.dot(w, ev(f, ctx)))
        A[idx] = val
    return A


def _coef_dict(coefficient_values):
    out = {}
    for k, v in coefficient_values.items():
        v = v if isinstance(v, tuple) else (np.asarray(v, float), None)
        out[k] = v
    return out


def cell_tensor(integrands, coords, coefficient_values, degree, elements=None):
    """Element tensor of ``sum(integrands) * dx`` on one cell."""
    side = Side(coords)
    tdim = side.J.shape[1]
    xi, w = simplex_rule(tdim, degree)
    x = side.X[0] + xi @ side.J.T
    w = w * side.detJ
    elements = elements or _collect_elements(integrands)
    return _tensor(integrands, x, w, {"+": side}, {"+": xi}, _coef_dict(coefficient_values),
                   elements, False)


def exterior_facet_tensor(integrands, coords, facet, coefficient_values, degree, elements=None):
    """Element tensor of ``sum(integrands) * ds`` on local facet ``facet`` of a cell."""
    side = Side(coords)
    tdim = side.J.shape[1]
    fv = list(reference.sub_entities(tdim, tdim - 1)[facet])
    opp = [v for v in range(tdim + 1) if v not in fv][0]
    side.normal = outward_normal(side.X[fv], side.X[opp])
    x, w = facet_points(side.X[fv], degree)
    elements = elements or _collect_elements(integrands)
    return _tensor(integrands, x, w, {"+": side}, {"+": side.pull_back(x)},
                   _coef_dict(coefficient_values), elements, False)


def interior_facet_tensor(integrands, coords_plus, coords_minus, coefficient_values, degree,
                          elements=None, tol=1e-10):
    """Macro tensor of ``sum(integrands) * dS`` on the facet shared by two cells ('+' dofs first).

    ``coefficient_values`` maps coefficients to ``(values_plus, values_minus)``.
    """
    plus, minus = Side(coords_plus), Side(coords_minus)
    d = np.linalg.norm(plus.X[:, None] - minus.X[None], axis=2)
    shared = [i for i in range(len(plus.X)) if d[i].min() <= tol]
    if len(shared) != len(plus.X) - 1:
        raise ValueError("cells do not share a facet")
    P = plus.X[shared]
    opp_p = plus.X[[i for i in range(len(plus.X)) if i not in shared][0]]
    plus.normal = outward_normal(P, opp_p)
    minus.normal = -plus.normal
    x, w = facet_points(P, degree)
    elements = elements or _collect_elements(integrands)
    return _tensor(integrands, x, w, {"+": plus, "-": minus},
                   {"+": plus.pull_back(x), "-": minus.pull_back(x)},
                   {k: tuple(np.asarray(a, float) for a in v) for k, v in coefficient_values.items()},
                   elements, True)


def _collect_elements(integrands):
    found = {}
    for f in integrands:
        found.update(_arguments(f))
    return found


def integrands_of(integrals):
    return [i.integrand for i in integrals]
