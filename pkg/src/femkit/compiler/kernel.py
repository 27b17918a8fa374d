"""Element kernels in quadrature representation.

An integral is lowered to a *tape*: a flat list of operations over
registers. Every register is an array of shape ``(C, Q, A0, A1, *value)``
where ``C`` is the cell batch, ``Q`` the quadrature points and ``A0``/``A1``
the test/trial dof axes (size 1 when a register does not depend on that
argument), so one tape execution evaluates the integrand for every basis
function pair on a whole batch of cells at once. The element tensor is

    A[c, i, j] = sum_q w_q * scale_c * R[c, q, i, j]

with ``scale`` the Jacobian determinant (cells) or the facet measure
relative to the reference facet (facets).

Interior-facet kernels produce the two-cell macro tensor: argument dof axes
are doubled, '+' dofs first. Basis tables for the '-' cell are tabulated for
every local facet and every ordering of the facet's vertices, so the
quadrature points of both cells coincide physically.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import factorial

import numpy as np

from femkit import reference
from femkit.compiler.quadrature import facet_rule, map_facet_points, quadrature_rule
from femkit.errors import FemkitError, ShapeMismatch, UnsupportedExpression
from femkit.form import algorithms
from femkit.form.expr import (Argument, Call, CellSize, Coefficient, Constant, Division, Dot,
                              FacetNormal, Grad, Identity, Indexed, Inner, ListTensor, Neg, Outer,
                              PointCoefficient, Power, Product, Restricted, SpatialCoordinate, Sum,
                              Trace, Zero, _NUMPY_FUNCS)
from femkit.form.form import Integral
from femkit.mesh.geometry import affine_maps, facet_measure, outward_normals

IR_SCHEMA = "femkit-kir-1"
MEMORY_BUDGET = 4_000_000  # float64 entries per register batch
KINDS = ("cell", "exterior_facet", "interior_facet")

# P1 element tensors on the reference cells, integrated symbolically (sympy,
# iterated integrals of products of barycentric coordinates). Keyed by tdim.
REFERENCE_P1_STIFFNESS = {
    1: np.array([[1.0, -1.0], [-1.0, 1.0]]),
    2: np.array([[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]) / 2.0,
    3: np.array([[3.0, -1.0, -1.0, -1.0], [-1.0, 1.0, 0.0, 0.0],
                 [-1.0, 0.0, 1.0, 0.0], [-1.0, 0.0, 0.0, 1.0]]) / 6.0,
}
REFERENCE_P1_MASS = {
    1: np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0,
    2: (np.ones((3, 3)) + np.eye(3)) / 24.0,
    3: (np.ones((4, 4)) + np.eye(4)) / 120.0,
}


def facet_permutations(tdim):
    return list(itertools.permutations(range(tdim)))


@dataclass
class Kernel:
    """Compiled integral(s) of one measure.

    ``arguments``, ``coefficients``, ``constants`` and ``point_coefficients``
    describe the runtime inputs in the order the tape refers to them.
    ``coefficient_objects`` (not serialised) keeps the originating terminals
    so assemblers can bind values.
    """

    kind: str
    rank: int
    tdim: int
    gdim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray
    tables: list
    arguments: list
    coefficients: list
    constants: list
    point_coefficients: list
    tape: list
    output: int
    shape: tuple
    subdomain: int | None = None
    coefficient_objects: list = field(default_factory=list, repr=False)
    constant_objects: list = field(default_factory=list, repr=False)
    point_objects: list = field(default_factory=list, repr=False)

    @property
    def num_tables_per_side(self):
        if self.kind == "cell":
            return 1
        return self.tdim + 1

    @property
    def nperm(self):
        return len(facet_permutations(self.tdim)) if self.kind == "interior_facet" else 1

    def cell_points(self):
        """Reference-cell quadrature points, ``(T, Q, tdim)`` with ``T`` tables."""
        if self.kind == "cell":
            return self.points[None]
        if self.kind == "exterior_facet":
            return np.stack([map_facet_points(self.tdim, f, self.points) for f in range(self.tdim + 1)])
        out = []
        for f in range(self.tdim + 1):
            for perm in facet_permutations(self.tdim):
                out.append(map_facet_points(self.tdim, f, self.points, perm))
        return np.stack(out)

    # ------------------------------------------------------------------
    def local_size(self, number):
        n = self.arguments[number]["n"]
        return 2 * n if self.kind == "interior_facet" else n

    def evaluate(self, coords, table_index=None, coefficients=(), constants=None, point_values=None,
                 coords_minus=None, table_index_minus=None, coefficients_minus=()):
        """Element tensors of a batch, ``(C, *shape)``.

        ``coords``: ``(C, tdim+1, gdim)`` vertex coordinates ('+' cell).
        ``table_index``: per-cell table row (local facet for exterior facets,
        ``facet * nperm`` for the '+' side of interior facets).
        ``coefficients``: list of ``(C, n_k)`` local dof values per
        coefficient; ``*_minus`` hold the '-' cell data on interior facets.
        ``constants``: values of named constants (defaults to the bound objects).
        ``point_values``: callables for point coefficients.
        """
        coords = np.asarray(coords, dtype=float)
        C = coords.shape[0]
        if coords.ndim != 3 or coords.shape[1] != self.tdim + 1 or coords.shape[2] != self.gdim:
            raise ShapeMismatch(f"coordinates must have shape (C, {self.tdim + 1}, {self.gdim})")
        if constants is None:
            constants = [c.value for c in self.constant_objects]
        if point_values is None:
            point_values = [p.eval_points for p in self.point_objects]
        if table_index is None:
            table_index = np.zeros(C, dtype=np.int64)
        per_cell = int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1
        vmax = max([int(np.prod(t["values"].shape[2:])) for t in self.tables] + [1])
        chunk = max(1, MEMORY_BUDGET // max(1, len(self.weights) * per_cell * vmax * self.gdim))
        out = np.empty((C,) + tuple(self.shape))
        for s in range(0, C, chunk):
            sl = slice(s, min(C, s + chunk))
            minus = None
            if self.kind == "interior_facet":
                minus = (coords_minus[sl], np.asarray(table_index_minus)[sl],
                         [np.asarray(w)[sl] for w in coefficients_minus])
            out[sl] = self._run(coords[sl], np.asarray(table_index)[sl],
                                [np.asarray(w)[sl] for w in coefficients], constants, point_values, minus)
        return out

    def _run(self, coords, tidx, coefs, constants, point_values, minus):
        C = coords.shape[0]
        J, detJ, K, h = affine_maps(coords)
        Q = len(self.weights)
        ref_pts = self.cell_points()[tidx]          # (C, Q, tdim)
        X = coords[:, 0, None, :] + np.einsum("cgt,cqt->cqg", J, ref_pts)
        interior = self.kind == "interior_facet"
        if self.kind == "cell":
            scale = np.abs(detJ)
        else:
            facet = tidx // self.nperm
            fv = np.array(reference.sub_entities(self.tdim, self.tdim - 1))[facet]
            fcoords = np.take_along_axis(coords, fv[:, :, None], axis=1)
            scale = facet_measure(fcoords) * factorial(self.tdim - 1)
            normal = outward_normals(K, facet, self.tdim)
        sides = [(K, h, tidx, coefs)]
        if interior:
            cm, tm, wm = minus
            _, _, Km, hm = affine_maps(np.asarray(cm, dtype=float))
            sides.append((Km, hm, np.asarray(tm), wm))
        regs = []
        for ins in self.tape:
            op, a = ins["op"], ins["args"]
            if op == "arg":
                Kx, _, ti, _ = sides[a["side"]]
                tab = self.tables[a["table"]]
                vals = self._basis(tab, ti, Kx, a["deriv"])          # (C, Q, n, *v)
                n = vals.shape[2]
                if interior:
                    full = np.zeros(vals.shape[:2] + (2 * n,) + vals.shape[3:])
                    full[:, :, a["side"] * n:(a["side"] + 1) * n] = vals
                    vals = full
                r = vals[:, :, :, None] if a["number"] == 0 else vals[:, :, None, :]
            elif op == "coef":
                Kx, _, ti, ws = sides[a["side"]]
                tab = self.tables[a["table"]]
                vals = self._basis(tab, ti, Kx, a["deriv"])
                w = ws[a["index"]]
                r = np.einsum("cn,cqn...->cq...", w, vals)[:, :, None, None]
            elif op == "pointcoef":
                fn = point_values[a["index"]]
                v = np.asarray(fn(X.reshape(-1, self.gdim)), dtype=float)
                r = v.reshape((C, Q) + tuple(a["shape"]))[:, :, None, None]
            elif op == "x":
                r = X[:, :, None, None, :]
            elif op == "normal":
                sgn = 1.0 if a["side"] == 0 else -1.0
                r = (sgn * normal)[:, None, None, None, :]
            elif op == "cellsize":
                r = sides[a["side"]][1][:, None, None, None]
            elif op == "const":
                v = np.asarray(constants[a["index"]], dtype=float)
                r = v.reshape((1, 1, 1, 1) + v.shape)
            elif op == "literal":
                v = np.array(a["value"], dtype=float).reshape(a["shape"])
                r = v.reshape((1, 1, 1, 1) + v.shape)
            elif op == "identity":
                r = np.eye(a["n"])[None, None, None, None]
            elif op == "zero":
                r = np.zeros((1, 1, 1, 1) + tuple(a["shape"]))
            else:
                r = _apply(op, a, regs)
            regs.append(r)
        res = regs[self.output]
        full = (C, Q) + (tuple(self.shape) + (1, 1))[:2]
        res = np.broadcast_to(res, full)
        A = np.einsum("cqij,q,c->cij", res, self.weights, scale)
        return A.reshape((C,) + tuple(self.shape))

    def _basis(self, tab, tidx, K, deriv):
        if deriv == 0:
            return tab["values_shaped"][tidx]
        g = tab["grads_shaped"][tidx]                     # (C, Q, n, *v, tdim)
        return np.einsum("cqn...r,crg->cqn...g", g, K)

    # ------------------------------------------------------------------
    def to_ir(self):
        return {
            "schema": IR_SCHEMA,
            "kind": self.kind,
            "subdomain": self.subdomain,
            "rank": self.rank,
            "tdim": self.tdim,
            "gdim": self.gdim,
            "quadrature": {"degree": self.degree, "points": self.points.tolist(),
                           "weights": self.weights.tolist()},
            "tables": [{"element": t["element"], "value_shape": list(t["value_shape"]),
                        "values": t["values"].tolist(), "grads": t["grads"].tolist()}
                       for t in self.tables],
            "arguments": self.arguments,
            "coefficients": self.coefficients,
            "constants": self.constants,
            "point_coefficients": self.point_coefficients,
            "tape": self.tape,
            "output": self.output,
            "shape": list(self.shape),
        }

    @classmethod
    def from_ir(cls, ir):
        if isinstance(ir, str):
            ir = json.loads(ir)
        if ir.get("schema") != IR_SCHEMA:
            raise FemkitError(f"unsupported kernel IR schema {ir.get('schema')!r}")
        tables = [_make_table(t["element"], tuple(t["value_shape"]),
                              np.array(t["values"], dtype=float), np.array(t["grads"], dtype=float))
                  for t in ir["tables"]]
        q = ir["quadrature"]
        return cls(kind=ir["kind"], rank=ir["rank"], tdim=ir["tdim"], gdim=ir["gdim"],
                   degree=q["degree"],
                   points=np.array(q["points"], dtype=float).reshape(
                       len(q["weights"]), ir["tdim"] - (ir["kind"] != "cell")),
                   weights=np.array(q["weights"], dtype=float), tables=tables,
                   arguments=ir["arguments"], coefficients=ir["coefficients"],
                   constants=ir["constants"], point_coefficients=ir["point_coefficients"],
                   tape=ir["tape"], output=ir["output"], shape=tuple(ir["shape"]),
                   subdomain=ir.get("subdomain"))

    def pseudocode(self):
        lines = [f"kernel {self.kind}" + (f"({self.subdomain})" if self.subdomain is not None else "")
                 + f" rank={self.rank} shape={list(self.shape)}",
                 f"  quadrature: degree {self.degree}, {len(self.weights)} points"]
        for i, t in enumerate(self.tables):
            lines.append(f"  table T{i}: {t['element']} values{list(t['values'].shape)}")
        lines.append("  for each cell in batch:")
        lines.append("    geometry: J, detJ, K = J^-1, h" + ("" if self.kind == "cell" else ", n, facet scale"))
        lines.append("    for q in quadrature points:")
        for i, ins in enumerate(self.tape):
            args = ", ".join(f"{k}={v}" for k, v in ins["args"].items() if k not in ("value",))
            if "value" in ins["args"]:
                args = f"value={ins['args']['value']}" + (", " + args if args else "")
            lines.append(f"      r{i} = {ins['op']}({args})")
        lines.append(f"      A[i, j] += w[q] * scale * r{self.output}[i, j]")
        return "\n".join(lines)


def _pad(a, rank_a, rank_b, front):
    """Insert ``rank_b`` singleton value axes after (front=False) or before the
    value axes of a register of value rank ``rank_a``."""
    if front:
        return a.reshape(a.shape[:4] + (1,) * rank_b + a.shape[4:])
    return a.reshape(a.shape + (1,) * rank_b)


def _apply(op, a, regs):
    if op == "add":
        return regs[a["a"]] + regs[a["b"]]
    if op == "neg":
        return -regs[a["a"]]
    if op in ("mul", "div"):
        x, y = regs[a["a"]], regs[a["b"]]
        rx, ry = x.ndim - 4, y.ndim - 4
        if rx == 0:
            x = _pad(x, 0, ry, False)
        if ry == 0:
            y = _pad(y, 0, rx, False)
        return x * y if op == "mul" else x / y
    if op == "pow":
        return np.power(regs[a["a"]], a["exponent"])
    if op == "call":
        return _NUMPY_FUNCS[a["fn"]](regs[a["a"]])
    if op == "index":
        return regs[a["a"]][:, :, :, :, a["i"]]
    if op == "stack":
        items = [regs[i] for i in a["items"]]
        shape = np.broadcast_shapes(*(x.shape for x in items))
        return np.stack([np.broadcast_to(x, shape) for x in items], axis=4)
    if op == "dot":
        x, y = regs[a["a"]], regs[a["b"]]
        rx, ry = x.ndim - 4, y.ndim - 4
        x = _pad(x, rx, ry - 1, False)
        y = _pad(y, ry, rx - 1, True)
        return (x * y).sum(axis=4 + rx - 1)
    if op == "inner":
        x, y = regs[a["a"]], regs[a["b"]]
        p = x * y
        return p.sum(axis=tuple(range(4, p.ndim)))
    if op == "outer":
        x, y = regs[a["a"]], regs[a["b"]]
        rx, ry = x.ndim - 4, y.ndim - 4
        return _pad(x, rx, ry, False) * _pad(y, ry, rx, True)
    if op == "trace":
        return np.trace(regs[a["a"]], axis1=-2, axis2=-1)
    raise FemkitError(f"unknown tape op {op!r}")


def _make_table(element_name, value_shape, values, grads):
    """Table with basis arrays reshaped to ``(T, Q, n, *value_shape[, tdim])``."""
    T, Q, n = values.shape[:3]
    return {"element": element_name, "value_shape": tuple(value_shape), "values": values,
            "grads": grads,
            "values_shaped": values.reshape((T, Q, n) + tuple(value_shape)),
            "grads_shaped": grads.reshape((T, Q, n) + tuple(value_shape) + (grads.shape[-1],))}


# ---------------------------------------------------------------------------
# compilation
# ---------------------------------------------------------------------------
class _TapeBuilder:
    def __init__(self, kind, tdim, gdim, ref_points):
        self.kind = kind
        self.tdim = tdim
        self.gdim = gdim
        self.ref_points = ref_points      # (T, Q, tdim)
        self.tape = []
        self.cse = {}
        self.tables = []
        self.table_ids = {}
        self.arguments = {}
        self.coefficients = []
        self.coef_index = {}
        self.constants = []
        self.const_index = {}
        self.points = []
        self.point_index = {}
        self.coefficient_objects = []
        self.constant_objects = []
        self.point_objects = []

    def emit(self, op, key=None, **args):
        if key is not None and key in self.cse:
            return self.cse[key]
        self.tape.append({"op": op, "args": args})
        r = len(self.tape) - 1
        if key is not None:
            self.cse[key] = r
        return r

    def table(self, element):
        k = element.descriptor
        if k not in self.table_ids:
            T, Q, _ = self.ref_points.shape
            vals, grads = element.tabulate(self.ref_points.reshape(T * Q, self.tdim), 1)
            vals = vals.reshape((T, Q) + vals.shape[1:])
            grads = grads.reshape((T, Q) + grads.shape[1:])
            self.tables.append(_make_table(str(element), element.value_shape, vals, grads))
            self.table_ids[k] = len(self.tables) - 1
        return self.table_ids[k]

    def side_of(self, side, node):
        if self.kind != "interior_facet":
            return 0
        if side is None:
            raise UnsupportedExpression(f"{node} is not restricted")
        return 0 if side == "+" else 1

    def compile(self, e, side=None):
        t = type(e)
        key = (e.key, side)
        if key in self.cse:
            return self.cse[key]
        if t is Restricted:
            if self.kind != "interior_facet":
                raise UnsupportedExpression("restriction outside interior-facet integral")
            r = self.compile(e.children[0], e.side)
            self.cse[key] = r
            return r
        if isinstance(e, Argument) or (t is Grad and isinstance(e.children[0], Argument)):
            arg = e if isinstance(e, Argument) else e.children[0]
            tab = self.table(arg.element)
            self.arguments.setdefault(arg.number, {"number": arg.number, "table": tab,
                                                   "n": arg.element.space_dim,
                                                   "element": str(arg.element)})
            return self.emit("arg", key, number=arg.number, table=tab,
                             side=self.side_of(side, arg), deriv=int(t is Grad))
        if isinstance(e, Coefficient) or (t is Grad and isinstance(e.children[0], Coefficient)):
            c = e if isinstance(e, Coefficient) else e.children[0]
            tab = self.table(c.element)
            if c.key not in self.coef_index:
                self.coef_index[c.key] = len(self.coefficients)
                self.coefficients.append({"name": c.name, "table": tab, "n": c.element.space_dim,
                                          "element": str(c.element)})
                self.coefficient_objects.append(c)
            return self.emit("coef", key, index=self.coef_index[c.key], table=tab,
                             side=self.side_of(side, c), deriv=int(t is Grad))
        if t is Grad:
            raise UnsupportedExpression(f"gradient of {e.children[0]} reached the compiler")
        if isinstance(e, PointCoefficient):
            if e.key not in self.point_index:
                self.point_index[e.key] = len(self.points)
                self.points.append({"name": e.name, "shape": list(e.shape)})
                self.point_objects.append(e)
            return self.emit("pointcoef", (e.key, None), index=self.point_index[e.key], shape=list(e.shape))
        if isinstance(e, SpatialCoordinate):
            if e.dim != self.gdim:
                raise ShapeMismatch(f"spatial coordinate of dimension {e.dim} on a {self.gdim}-d mesh")
            return self.emit("x", (e.key, None))
        if isinstance(e, FacetNormal):
            if self.kind == "cell":
                raise UnsupportedExpression("facet normal in a cell integral")
            return self.emit("normal", key, side=self.side_of(side, e))
        if isinstance(e, CellSize):
            return self.emit("cellsize", key, side=self.side_of(side, e))
        if isinstance(e, Constant):
            if e.is_literal:
                return self.emit("literal", (e.key, None), value=e.value.reshape(-1).tolist(),
                                 shape=list(e.shape))
            if e.key not in self.const_index:
                self.const_index[e.key] = len(self.constants)
                self.constants.append({"name": e.name, "shape": list(e.shape)})
                self.constant_objects.append(e)
            return self.emit("const", (e.key, None), index=self.const_index[e.key])
        if isinstance(e, Identity):
            return self.emit("identity", (e.key, None), n=e.dim)
        if isinstance(e, Zero):
            return self.emit("zero", (e.key, None), shape=list(e.shape))
        kids = [self.compile(c, side) for c in e.children]
        if t is Sum:
            return self.emit("add", key, a=kids[0], b=kids[1])
        if t is Neg:
            return self.emit("neg", key, a=kids[0])
        if t is Product:
            return self.emit("mul", key, a=kids[0], b=kids[1])
        if t is Division:
            return self.emit("div", key, a=kids[0], b=kids[1])
        if t is Power:
            return self.emit("pow", key, a=kids[0], exponent=e.exponent)
        if t is Call:
            return self.emit("call", key, fn=e.fn, a=kids[0])
        if t is Indexed:
            return self.emit("index", key, a=kids[0], i=e.index)
        if t is ListTensor:
            return self.emit("stack", key, items=kids)
        if t is Dot:
            return self.emit("dot", key, a=kids[0], b=kids[1])
        if t is Inner:
            return self.emit("inner", key, a=kids[0], b=kids[1])
        if t is Outer:
            return self.emit("outer", key, a=kids[0], b=kids[1])
        if t is Trace:
            return self.emit("trace", key, a=kids[0])
        raise UnsupportedExpression(f"cannot compile {type(e).__name__}")


def _integrals_of(integral):
    if isinstance(integral, Integral):
        return [integral]
    out = list(integral)
    if not out:
        raise ValueError("no integrals to compile")
    return out


def compile_integral(integral, metadata=None, tdim=None, gdim=None, degree=None):
    """Compile one integral, or several integrals sharing a measure, into a Kernel.

    Integrals of the same measure are merged into one tape whose quadrature
    degree is the maximum of their estimated degrees (or ``degree``).
    """
    integrals = _integrals_of(integral)
    kind = integrals[0].kind
    sub = integrals[0].subdomain
    if any(i.kind != kind or i.subdomain != sub for i in integrals):
        raise ValueError("merged integrals must share the measure")
    if metadata is None:
        from femkit.form.form import Form
        metadata = algorithms.check_form(Form(integrals))
    args = metadata.arguments
    if tdim is None:
        elems = [a.element for a in args] + [c.element for c in metadata.coefficients
                                             if isinstance(c, Coefficient)]
        if not elems:
            raise UnsupportedExpression("cannot infer the cell of a form without elements; pass tdim")
        tdim = elems[0].tdim
    gdim = tdim if gdim is None else gdim
    if degree is None:
        degree = max(algorithms.quadrature_degree(i.integrand) for i in integrals)
    if kind == "cell":
        rule = quadrature_rule(tdim, degree)
    else:
        rule = facet_rule(tdim, degree)
    integrand = None
    for itg in integrals:
        e = algorithms.preprocess_integrand(itg.integrand, gdim)
        integrand = e if integrand is None else integrand + e
    proto = Kernel(kind=kind, rank=metadata.rank, tdim=tdim, gdim=gdim, degree=degree,
                   points=rule.points, weights=rule.weights, tables=[], arguments=[],
                   coefficients=[], constants=[], point_coefficients=[], tape=[], output=0, shape=())
    builder = _TapeBuilder(kind, tdim, gdim, proto.cell_points())
    out = builder.compile(integrand)
    # an argument may have been simplified away (e.g. zero terms): register its table anyway
    for a in args:
        if a.number not in builder.arguments:
            builder.arguments[a.number] = {"number": a.number, "table": builder.table(a.element),
                                           "n": a.element.space_dim, "element": str(a.element)}
    arguments = [builder.arguments[i] for i in range(metadata.rank)]
    factor = 2 if kind == "interior_facet" else 1
    shape = tuple(factor * a["n"] for a in arguments)
    return Kernel(kind=kind, rank=metadata.rank, tdim=tdim, gdim=gdim, degree=degree,
                  points=rule.points, weights=rule.weights, tables=builder.tables,
                  arguments=arguments, coefficients=builder.coefficients,
                  constants=builder.constants, point_coefficients=builder.points,
                  tape=builder.tape, output=out, shape=shape, subdomain=sub,
                  coefficient_objects=builder.coefficient_objects,
                  constant_objects=builder.constant_objects, point_objects=builder.point_objects)


def compile_form(form, tdim=None, gdim=None):
    """One kernel per (measure, subdomain) of ``form``."""
    meta = algorithms.check_form(form)
    kernels = []
    for (kind, sub), group in algorithms.group_integrals(form).items():
        kernels.append(compile_integral(group, meta, tdim=tdim, gdim=gdim))
    return kernels


# ---------------------------------------------------------------------------
# single-cell tabulation
# ---------------------------------------------------------------------------
def _match_facets(coords_plus, coords_minus, tdim, tol=1e-10):
    """Local facets and '-' permutation index of two cells sharing a facet."""
    d = np.linalg.norm(coords_plus[:, None, :] - coords_minus[None, :, :], axis=2)
    shared = [(i, int(np.argmin(d[i]))) for i in range(tdim + 1) if d[i].min() <= tol]
    if len(shared) != tdim:
        raise ShapeMismatch("cells do not share a facet")
    plus_v = {i for i, _ in shared}
    minus_v = {j for _, j in shared}
    f_plus = next(f for f in range(tdim + 1) if reference.facet_opposite_vertex(tdim, f) not in plus_v)
    f_minus = next(f for f in range(tdim + 1) if reference.facet_opposite_vertex(tdim, f) not in minus_v)
    fv_plus = reference.sub_entities(tdim, tdim - 1)[f_plus]
    fv_minus = list(reference.sub_entities(tdim, tdim - 1)[f_minus])
    to_minus = dict(shared)
    perm = tuple(fv_minus.index(to_minus[v]) for v in fv_plus)
    return f_plus, f_minus, facet_permutations(tdim).index(perm)


def tabulate_tensor(kernel: Kernel, cell_coordinates, coefficient_values=(), neighbor_coordinates=None,
                    neighbor_coefficient_values=(), facet=None, constants=None, point_values=None):
    """Dense element tensor of one cell (or one facet / facet pair).

    Exterior-facet kernels need ``facet`` (local facet index). Interior-facet
    kernels take the '-' cell in ``neighbor_coordinates``; the shared facet
    and vertex alignment are found by matching physical coordinates.
    """
    X = np.asarray(cell_coordinates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    cv = [np.asarray(w, dtype=float)[None] for w in coefficient_values]
    if kernel.kind == "cell":
        return kernel.evaluate(X[None], None, cv, constants, point_values)[0]
    if kernel.kind == "exterior_facet":
        if facet is None:
            raise ValueError("exterior-facet kernels need the local facet index")
        return kernel.evaluate(X[None], np.array([facet]), cv, constants, point_values)[0]
    Xm = np.asarray(neighbor_coordinates, dtype=float)
    if Xm.ndim == 1:
        Xm = Xm[:, None]
    fp, fm, p = _match_facets(X, Xm, kernel.tdim)
    nperm = kernel.nperm
    cvm = [np.asarray(w, dtype=float)[None] for w in neighbor_coefficient_values]
    return kernel.evaluate(X[None], np.array([fp * nperm]), cv, constants, point_values,
                           Xm[None], np.array([fm * nperm + p]), cvm)[0]


def emit_kernel_ir(kernel, pretty=False):
    """JSON text of a kernel (or list of kernels) with a pseudocode listing."""
    kernels = kernel if isinstance(kernel, (list, tuple)) else [kernel]
    docs = []
    for k in kernels:
        ir = k.to_ir()
        ir["listing"] = k.pseudocode().split("\n")
        docs.append(ir)
    payload = docs[0] if not isinstance(kernel, (list, tuple)) else {"schema": IR_SCHEMA, "kernels": docs}
    return json.dumps(payload, indent=1 if pretty else None)


def load_kernel_ir(text):
    """Kernel(s) from :func:`emit_kernel_ir` output."""
    doc = json.loads(text) if isinstance(text, str) else text
    if "kernels" in doc:
        return [Kernel.from_ir(k) for k in doc["kernels"]]
    return Kernel.from_ir(doc)
