"""Algorithms on forms: checking, degree estimation, monomial expansion,
lhs/rhs splitting, Gateaux differentiation, symmetry detection and the
rewriting passes run before compilation."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field

from femkit.errors import (EmptyBilinear, MixedRanks, NonlinearInTrial, NotMultilinear,
                           ShapeMismatch, UnsupportedExpression, UnsupportedNode)
from femkit.form.expr import (Argument, Avg, Call, CellSize, Coefficient, Constant, Div, Division,
                              Dot, Expr, FacetNormal, Grad, Identity, Indexed, Inner, Jump,
                              ListTensor, Neg, Outer, PointCoefficient, Power, Product, Restricted,
                              SpatialCoordinate, Sum, Terminal, Trace, Zero, add, as_vector, call,
                              div, dot, indexed, is_literal, literal, map_expr, mul, neg, outer,
                              power, rebuild, replace, restrict, trace)
from femkit.form.form import Form

MIN_DEGREE, MAX_DEGREE = 1, 20
NONPOLYNOMIAL_INCREMENT = 2


# ---------------------------------------------------------------------------
# degree estimation and checking
# ---------------------------------------------------------------------------
def estimate_degree(e: Expr) -> int:
    """Total polynomial degree of an integrand (before clamping)."""
    memo = {}

    def deg(n):
        k = id(n)
        if k in memo:
            return memo[k]
        t = type(n)
        if isinstance(n, (Argument, Coefficient)):
            d = n.element.degree
        elif isinstance(n, PointCoefficient):
            d = n.degree
        elif isinstance(n, SpatialCoordinate):
            d = 1
        elif isinstance(n, Terminal):
            d = 0
        elif t in (Grad, Div):
            d = max(deg(n.children[0]) - 1, 0)
        elif t in (Product, Division, Dot, Inner, Outer):
            d = deg(n.children[0]) + deg(n.children[1])
        elif t is Power:
            k_ = n.exponent
            base = deg(n.children[0])
            if isinstance(k_, int) and k_ >= 0:
                d = base * k_
            else:
                d = base + NONPOLYNOMIAL_INCREMENT
        elif t is Call:
            d = deg(n.children[0]) + NONPOLYNOMIAL_INCREMENT
        else:  # Sum, ListTensor, Neg, Indexed, Trace, Restricted, Jump, Avg
            d = max(deg(c) for c in n.children)
        memo[k] = d
        return d

    return deg(e)


def quadrature_degree(e: Expr) -> int:
    return min(max(estimate_degree(e), MIN_DEGREE), MAX_DEGREE)


@dataclass
class FormMetadata:
    rank: int
    arguments: list
    coefficients: list
    constants: list
    degrees: list = field(default_factory=list)  # one per integral

    @property
    def test_element(self):
        return self.arguments[0].element if self.rank >= 1 else None

    @property
    def trial_element(self):
        return self.arguments[1].element if self.rank >= 2 else None


def _arg_counts(term):
    """Occurrences of each argument number in a monomial, and whether an
    argument sits inside a nonlinear atom.

    Components of a list tensor are alternatives, not factors, so they
    contribute the per-argument maximum rather than the sum.
    """
    nonlinear = set()

    def walk(n, inside_atom):
        if isinstance(n, Argument):
            if inside_atom:
                nonlinear.add(n.number)
            return Counter({n.number: 1})
        if isinstance(n, ListTensor):
            out = Counter()
            for c in n.children:
                out |= walk(c, inside_atom)
            return out
        if isinstance(n, (Power, Call)):
            kids = [(c, True) for c in n.children]
        elif isinstance(n, Division):
            kids = [(n.children[0], inside_atom), (n.children[1], True)]
        else:
            kids = [(c, inside_atom) for c in n.children]
        out = Counter()
        for c, flag in kids:
            out += walk(c, flag)
        return out

    counts = walk(term, False)
    return counts, nonlinear


def check_form(form: Form) -> FormMetadata:
    """Validate arity and estimate per-integral quadrature degrees."""
    if not isinstance(form, Form):
        raise TypeError("check_form expects a Form")
    by_number = {}
    for a in form._terminals(Argument):
        prev = by_number.setdefault(a.number, a)
        if prev.element.descriptor != a.element.descriptor:
            raise MixedRanks(f"argument {a.number} used with elements {prev.element} and {a.element}")
    numbers_ = sorted(by_number)
    rank = len(numbers_)
    if numbers_ != list(range(rank)):
        raise NotMultilinear(f"argument numbers {numbers_} are not contiguous from 0")
    if rank > 2:
        raise NotMultilinear("forms of arity above 2 are not supported")
    expected = Counter({i: 1 for i in range(rank)})
    for itg in form.integrals:
        for _, term in expand(itg.integrand):
            counts, nonlinear = _arg_counts(term)
            if nonlinear or counts != expected:
                raise NotMultilinear(f"term {term} is not linear in each argument of a rank-{rank} form")
    return FormMetadata(rank=rank, arguments=[by_number[i] for i in range(rank)],
                        coefficients=form.coefficients(), constants=form.constants(),
                        degrees=[quadrature_degree(i.integrand) for i in form.integrals])


# ---------------------------------------------------------------------------
# monomial expansion
# ---------------------------------------------------------------------------
_ONE = None


def _one():
    global _ONE
    if _ONE is None:
        _ONE = literal(1.0)
    return _ONE


_LINEAR_UNARY = (Indexed, Grad, Div, Trace, Restricted, Avg)
_BILINEAR = (Dot, Inner, Outer)


def expand(e: Expr):
    """Expand ``e`` into monomials ``[(coefficient, term), ...]``.

    Products distribute over sums through every multilinear operator; powers,
    function calls and denominators are atoms. Literal scalar factors are
    collected into the float coefficient. Zero terms are dropped.
    """
    memo = {}

    def ex(n):
        k = id(n)
        if k in memo:
            return memo[k]
        t = type(n)
        if t is Sum:
            out = ex(n.children[0]) + ex(n.children[1])
        elif t is Neg:
            out = [(-c, x) for c, x in ex(n.children[0])]
        elif t is Product:
            out = [(ca * cb, mul(xa, xb)) for ca, xa in ex(n.children[0]) for cb, xb in ex(n.children[1])]
        elif t is Division:
            den = n.children[1]
            if is_literal(den):
                out = [(c / float(den.value), x) for c, x in ex(n.children[0])]
            else:
                out = [(c, div(x, den)) for c, x in ex(n.children[0])]
        elif t in _BILINEAR:
            out = [(ca * cb, rebuild(n, (xa, xb))) for ca, xa in ex(n.children[0])
                   for cb, xb in ex(n.children[1])]
        elif t in _LINEAR_UNARY:
            out = [(c, rebuild(n, (x,))) for c, x in ex(n.children[0])]
        elif t is Jump:
            rest = n.children[1:]
            out = [(c, rebuild(n, (x,) + rest)) for c, x in ex(n.children[0])]
        elif t is ListTensor:
            parts = [ex(c) for c in n.children]
            if all(len(p) == 1 and p[0][0] == 1.0 for p in parts):
                out = [(1.0, n)]
            else:
                out = []
                for i, p in enumerate(parts):
                    for c, x in p:
                        items = [x if j == i else Zero(x.shape) for j in range(len(parts))]
                        out.append((c, as_vector(items)))
        elif is_literal(n):
            out = [(float(n.value), _one())]
        else:
            out = [(1.0, n)]
        out = [(c, x) for c, x in out if c != 0.0 and not isinstance(x, Zero)]
        memo[k] = out
        return out

    return ex(e)


def from_terms(terms, shape=()):
    out = Zero(shape)
    for c, x in terms:
        if c == 1.0:
            t = x
        elif c == -1.0:
            t = neg(x)
        else:
            t = mul(literal(c), x)
        out = add(out, t)
    return out


# ---------------------------------------------------------------------------
# lhs / rhs
# ---------------------------------------------------------------------------
def _split(F: Form, trial_number=1):
    if not isinstance(F, Form):
        raise TypeError("lhs/rhs expect a Form")
    a_int, L_int = [], []
    for itg in F.integrals:
        with_trial, without = [], []
        for c, term in expand(itg.integrand):
            counts, nonlinear = _arg_counts(term)
            if trial_number in nonlinear or counts[trial_number] > 1:
                raise NonlinearInTrial(f"term {term} is nonlinear in the trial function")
            (with_trial if counts[trial_number] == 1 else without).append((c, term))
        if with_trial:
            a_int.append(itg.with_integrand(from_terms(with_trial)))
        if without:
            L_int.append(itg.with_integrand(from_terms([(-c, x) for c, x in without])))
    return Form(a_int), Form(L_int)


def lhs(F: Form) -> Form:
    a, _ = _split(F)
    if a.is_empty():
        raise EmptyBilinear("form has no terms containing the trial function")
    return a


def rhs(F: Form) -> Form:
    return _split(F)[1]


def lhs_rhs(F: Form):
    a, L = _split(F)
    if a.is_empty():
        raise EmptyBilinear("form has no terms containing the trial function")
    return a, L


# ---------------------------------------------------------------------------
# replacement, action and Gateaux derivative
# ---------------------------------------------------------------------------
def replace_form(form: Form, mapping) -> Form:
    out = []
    for itg in form.integrals:
        new = replace(itg.integrand, mapping)
        if not isinstance(new, Zero):
            out.append(itg.with_integrand(new))
    return Form(out)


def action(form: Form, coefficient) -> Form:
    """Replace the highest-numbered argument by ``coefficient``."""
    args = form.arguments()
    if not args:
        raise NotMultilinear("action of a functional")
    return replace_form(form, {args[-1]: coefficient})


def _gateaux(e, u, du):
    ukey = u.key
    memo = {}

    def d(n):
        k = id(n)
        if k in memo:
            return memo[k]
        t = type(n)
        if isinstance(n, Terminal):
            out = du if n.key == ukey else Zero(n.shape)
        elif t is Sum:
            out = add(d(n.children[0]), d(n.children[1]))
        elif t is Neg:
            out = neg(d(n.children[0]))
        elif t is Product:
            a, b = n.children
            out = add(mul(d(a), b), mul(a, d(b)))
        elif t is Division:
            a, b = n.children
            da, db = d(a), d(b)
            out = add(div(da, b), neg(div(mul(a, db), power(b, 2))))
        elif t is Power:
            a = n.children[0]
            da = d(a)
            k_ = n.exponent
            out = mul(mul(literal(float(k_)), power(a, k_ - 1)), da)
        elif t is Call:
            a = n.children[0]
            da = d(a)
            if isinstance(da, Zero):
                out = Zero(())
            elif n.fn == "sin":
                out = mul(call("cos", a), da)
            elif n.fn == "cos":
                out = neg(mul(call("sin", a), da))
            elif n.fn == "exp":
                out = mul(n, da)
            elif n.fn == "sqrt":
                out = div(da, mul(literal(2.0), n))
            elif n.fn == "sign":
                out = Zero(())
            else:
                raise UnsupportedNode(f"cannot differentiate {n.fn}()")
        elif t in _BILINEAR:
            a, b = n.children
            out = add(rebuild(n, (d(a), b)), rebuild(n, (a, d(b))))
        elif t is Jump:
            out = rebuild(n, (d(n.children[0]),) + n.children[1:])
        elif t is ListTensor:
            out = as_vector([d(c) for c in n.children])
        else:  # linear unary operators, Grad commutes with the derivative
            out = rebuild(n, (d(n.children[0]),))
        memo[k] = out
        return out

    return d(e)


def derivative(F: Form, u, du=None) -> Form:
    """Gateaux derivative of ``F`` with respect to coefficient ``u`` in direction ``du``.

    ``du`` defaults to a new Argument numbered ``rank(F)`` on ``u``'s space.
    """
    if not isinstance(u, (Coefficient, PointCoefficient, Constant)):
        raise TypeError("derivative is taken with respect to a coefficient")
    if du is None:
        rank = len({a.number for a in F.arguments()})
        du = Argument(rank, getattr(u, "function_space", None) or u.element)
    if du.shape != u.shape:
        raise ShapeMismatch("direction must have the coefficient's shape")
    out = []
    for itg in F.integrals:
        new = _gateaux(itg.integrand, u, du)
        if not isinstance(new, Zero):
            out.append(itg.with_integrand(new))
    return Form(out)


# ---------------------------------------------------------------------------
# symmetry detection
# ---------------------------------------------------------------------------
_COMMUTATIVE = (Inner,)


def _canon(e, swap):
    memo = {}

    def flat(n, cls):
        if type(n) is cls:
            return flat(n.children[0], cls) + flat(n.children[1], cls)
        return [n]

    def c(n):
        k = id(n)
        if k in memo:
            return memo[k]
        t = type(n)
        if isinstance(n, Argument):
            num = 1 - n.number if swap else n.number
            out = ("arg", num, n.element.descriptor)
        elif isinstance(n, Terminal):
            out = n.key
        elif t in (Product, Sum):
            out = (t.__name__,) + tuple(sorted((c(x) for x in flat(n, t)), key=repr))
        elif t in _COMMUTATIVE or (t is Dot and all(x.rank == 1 for x in n.children)):
            out = (t.__name__,) + tuple(sorted((c(x) for x in n.children), key=repr))
        else:
            attrs = tuple(getattr(n, a) for a in ("index", "fn", "exponent", "side") if hasattr(n, a))
            out = (t.__name__,) + attrs + tuple(c(x) for x in n.children)
        memo[k] = out
        return out

    return c(e)


def is_symmetric(a: Form) -> bool:
    """Syntactic symmetry: the expanded integrand is invariant under test/trial swap."""
    args = a.arguments()
    if len(args) != 2 or args[0].element.descriptor != args[1].element.descriptor:
        return False

    def counter(swap):
        cnt = Counter()
        for itg in a.integrals:
            for coef, term in expand(itg.integrand):
                cnt[(itg.kind, itg.subdomain, round(coef, 12), repr(_canon(term, swap)))] += 1
        return cnt

    return counter(False) == counter(True)


# ---------------------------------------------------------------------------
# rewriting passes used by the compiler
# ---------------------------------------------------------------------------
def inline_expressions(e: Expr, gdim: int) -> Expr:
    """Substitute symbolic point coefficients by their formulas over ``x``."""
    x = SpatialCoordinate(gdim)

    def sub(node, kids):
        if isinstance(node, PointCoefficient) and node.symbolic is not None:
            return map_expr(node.symbolic, lambda m, ks: x if isinstance(m, SpatialCoordinate) else rebuild(m, ks))
        return rebuild(node, kids)

    return map_expr(e, sub)


def expand_jump_avg(e: Expr) -> Expr:
    def fn(node, kids):
        t = type(node)
        if t is Jump:
            a = kids[0]
            ap, am = restrict(a, "+"), restrict(a, "-")
            if len(kids) == 1:
                return add(ap, neg(am))
            n = kids[1]
            np_, nm = restrict(n, "+"), restrict(n, "-")
            if not a.shape:
                return add(mul(ap, np_), mul(am, nm))
            return add(dot(ap, np_), dot(am, nm))
        if t is Avg:
            a = kids[0]
            return mul(literal(0.5), add(restrict(a, "+"), restrict(a, "-")))
        return rebuild(node, kids)

    return map_expr(e, fn)


_DERIV = {"sin": lambda a: call("cos", a), "cos": lambda a: neg(call("sin", a)),
          "exp": lambda a: call("exp", a), "sqrt": lambda a: div(literal(0.5), call("sqrt", a)),
          "abs": lambda a: call("sign", a), "sign": lambda a: Zero(())}


def _grad_of(a: Expr, g: int) -> Expr:
    """Gradient of ``a`` with Grad applied to terminals only."""
    t = type(a)
    shape = a.shape + (g,)
    if isinstance(a, (Argument, Coefficient)):
        return Grad(a)
    if isinstance(a, PointCoefficient):
        raise UnsupportedExpression(f"gradient of point-evaluated coefficient {a}")
    if isinstance(a, SpatialCoordinate):
        return Identity(g)
    if isinstance(a, (Constant, FacetNormal, CellSize, Identity, Zero)):
        return Zero(shape)
    if t is Sum:
        return add(_grad_of(a.children[0], g), _grad_of(a.children[1], g))
    if t is Neg:
        return neg(_grad_of(a.children[0], g))
    if t is Product:
        x, y = a.children
        return add(outer(y, _grad_of(x, g)) if not x.shape else mul(y, _grad_of(x, g)),
                   mul(x, _grad_of(y, g)) if not x.shape else outer(x, _grad_of(y, g)))
    if t is Division:
        x, y = a.children
        return add(div(_grad_of(x, g), y), neg(div(outer(x, _grad_of(y, g)), power(y, 2))))
    if t is Power:
        x = a.children[0]
        k = a.exponent
        return mul(mul(literal(float(k)), power(x, k - 1)), _grad_of(x, g))
    if t is Call:
        x = a.children[0]
        return mul(_DERIV[a.fn](x), _grad_of(x, g))
    if t is Indexed:
        return indexed(_grad_of(a.children[0], g), a.index)
    if t is ListTensor:
        return as_vector([_grad_of(c, g) for c in a.children])
    if t is Restricted:
        return restrict(_grad_of(a.children[0], g), a.side)
    if t is Grad:
        inner_ = a.children[0]
        if isinstance(inner_, (Argument, Coefficient)) and inner_.element.degree <= 1:
            return Zero(shape)
        raise UnsupportedExpression(f"second derivative of {inner_}")
    raise UnsupportedExpression(f"gradient of {type(a).__name__} expressions")


def apply_derivatives(e: Expr) -> Expr:
    """Push Grad and Div down to terminals (Div becomes a trace of Grad)."""
    def fn(node, kids):
        if type(node) is Grad:
            return _grad_of(kids[0], node.shape[-1])
        if type(node) is Div:
            a = kids[0]
            return trace(_grad_of(a, a.shape[-1]))
        return rebuild(node, kids)

    return map_expr(e, fn)


def preprocess_integrand(e: Expr, gdim: int) -> Expr:
    e = inline_expressions(e, gdim)
    e = expand_jump_avg(e)
    return apply_derivatives(e)


def group_integrals(form: Form):
    """Integrals grouped by (kind, subdomain), preserving first-appearance order."""
    groups = defaultdict(list)
    for itg in form.integrals:
        groups[(itg.kind, itg.subdomain)].append(itg)
    return dict(groups)


__all__ = [
    "FormMetadata", "action", "apply_derivatives", "check_form", "derivative", "estimate_degree",
    "expand", "expand_jump_avg", "from_terms", "group_integrals", "inline_expressions",
    "is_symmetric", "lhs", "lhs_rhs", "preprocess_integrand", "quadrature_degree", "replace_form",
    "rhs",
]
