"""Function spaces, discrete functions, expressions, interpolation and projection."""
from __future__ import annotations

import numbers

import numpy as np

from femkit import reference
from femkit.dofmap import build_dofmap
from femkit.element import FiniteElement, MixedElement, VectorElement, create_element
from femkit.element.finite_element import ElementDescriptor, _Element
from femkit.errors import NotMixed, PointNotInMesh, ShapeMismatch, Unsupported
from femkit.form.expr import Argument, Coefficient, Constant, PointCoefficient, SIDES, restrict
from femkit.form.parser import evaluate_spatial, parse_expression, split_argument
from femkit.la import Vector
from femkit.mesh.geometry import affine_maps

LOCATE_TOL = 1e-12


# ---------------------------------------------------------------------------
# function spaces
# ---------------------------------------------------------------------------
def _element_from(descriptor, cell):
    """Element from an element object, an ElementDescriptor or a tuple spec.

    Tuple specs: ``("CG", 1)``, ``("Vector", "CG", 2)``, ``("Vector", "CG", 2, dim)``,
    ``("Mixed", spec1, spec2, ...)``; a list of specs is a mixed element.
    """
    if isinstance(descriptor, _Element):
        return descriptor
    if isinstance(descriptor, ElementDescriptor):
        return create_element(descriptor)
    if isinstance(descriptor, list):
        return MixedElement(*[_element_from(d, cell) for d in descriptor])
    if isinstance(descriptor, tuple):
        head = descriptor[0]
        if head == "Vector":
            return VectorElement(descriptor[1], cell, descriptor[2], *descriptor[3:])
        if head == "Mixed":
            return MixedElement(*[_element_from(d, cell) for d in descriptor[1:]])
        return FiniteElement(head, cell, descriptor[1])
    raise TypeError(f"cannot build an element from {descriptor!r}")


class FunctionSpace:
    """Mesh + element + dofmap. Sub-spaces of mixed spaces are views that
    keep the parent's global numbering; ``collapse`` renumbers them."""

    def __init__(self, mesh, family, degree=None, dofmap=None, parent=None, component=()):
        if mesh.gdim != mesh.tdim:
            raise Unsupported("function spaces require gdim == tdim")
        if degree is not None:
            element = FiniteElement(family, mesh.cell_name, degree)
        else:
            element = _element_from(family, mesh.cell_name)
        if element.cell != mesh.cell_name:
            raise ShapeMismatch(f"element on {element.cell} for a {mesh.cell_name} mesh")
        self.mesh = mesh
        self.element = element
        self.dofmap = dofmap if dofmap is not None else build_dofmap(element, mesh)
        self.parent = parent
        self.component = tuple(component)
        self._dof_coordinates = None

    def dim(self):
        return self.dofmap.size

    @property
    def is_view(self):
        return self.dofmap.is_view

    def num_sub_spaces(self):
        return len(self.element.sub_elements)

    def sub(self, i):
        if not self.element.is_compound():
            raise NotMixed("space has no sub-spaces")
        sub_el = self.element.sub_elements[i]
        return FunctionSpace(self.mesh, sub_el, dofmap=self.dofmap.sub(i), parent=self,
                             component=self.component + (i,))

    def collapse(self):
        if not self.is_view:
            return self
        return FunctionSpace(self.mesh, self.element, dofmap=self.dofmap.collapse())

    def tabulate_dof_coordinates(self):
        """``(global_dim, gdim)`` coordinates of every dof of the root space
        (NaN for dofs outside a view)."""
        if self._dof_coordinates is None:
            self._dof_coordinates = self.dofmap.tabulate_dof_coordinates()
        return self._dof_coordinates

    def __add__(self, other):
        if not isinstance(other, FunctionSpace) or other.mesh is not self.mesh:
            return NotImplemented
        return FunctionSpace(self.mesh, MixedElement(self.element, other.element))

    def __repr__(self):
        return f"FunctionSpace({self.element}, dim={self.dim()})"


def VectorFunctionSpace(mesh, family, degree, dim=None):
    return FunctionSpace(mesh, VectorElement(family, mesh.cell_name, degree, dim))


def MixedFunctionSpace(spaces):
    mesh = spaces[0].mesh
    return FunctionSpace(mesh, MixedElement(*[s.element for s in spaces]))


def create_space(mesh, descriptor, degree=None):
    if isinstance(descriptor, str):
        return FunctionSpace(mesh, descriptor, degree)
    return FunctionSpace(mesh, descriptor)


def TestFunction(V):
    return Argument(0, V)


def TrialFunction(V):
    return Argument(1, V)


def TestFunctions(V):
    return split_argument(Argument(0, V))


def TrialFunctions(V):
    return split_argument(Argument(1, V))


def split(f):
    """Symbolic components of a mixed argument or coefficient."""
    return split_argument(f)


# ---------------------------------------------------------------------------
# point location
# ---------------------------------------------------------------------------
class _Locator:
    def __init__(self, mesh):
        coords = mesh.cell_coordinates()
        _, _, K, _ = affine_maps(coords)
        self.x0 = coords[:, 0, :]
        self.K = K
        self.tdim = mesh.tdim

    def locate(self, point):
        """(cell, reference coordinates) of the lowest-index cell containing ``point``."""
        p = np.asarray(point, dtype=float).reshape(-1)
        xi = np.einsum("ctg,cg->ct", self.K, p[None, :] - self.x0)
        lam0 = 1.0 - xi.sum(axis=1)
        inside = (xi >= -LOCATE_TOL).all(axis=1) & (lam0 >= -LOCATE_TOL)
        idx = np.nonzero(inside)[0]
        if len(idx) == 0:
            raise PointNotInMesh(f"point {p.tolist()} is outside the mesh")
        c = int(idx[0])
        return c, np.clip(xi[c], 0.0, 1.0)


def _locator(mesh):
    loc = getattr(mesh, "_femkit_locator", None)
    if loc is None:
        loc = _Locator(mesh)
        mesh._femkit_locator = loc
    return loc


# ---------------------------------------------------------------------------
# functions and expressions
# ---------------------------------------------------------------------------
def _parse_point(args):
    if len(args) == 1:
        return np.asarray(args[0], dtype=float).reshape(-1)
    return np.asarray(args, dtype=float)


class Function(Coefficient):
    """Finite element function ``u_h = sum_i U_i phi_i`` on a FunctionSpace."""

    __slots__ = ("function_space", "_vector")

    def __init__(self, V, vector=None, name=None):
        if V.is_view:
            V = V.collapse()
        super().__init__(V.element, name)
        self.function_space = V
        n = V.dim()
        if vector is None:
            arr = np.zeros(n)
        else:
            arr = np.array(vector.array if isinstance(vector, Vector) else vector, dtype=float)
            if arr.shape != (n,):
                raise ShapeMismatch(f"vector of length {arr.shape} for a space of dimension {n}")
        self._vector = Vector(arr)

    def vector(self):
        return self._vector

    @property
    def array(self):
        return self._vector.array

    @array.setter
    def array(self, values):
        self._vector.array[:] = values

    def copy(self):
        return Function(self.function_space, self.array.copy(), self.name)

    def assign(self, other):
        if isinstance(other, Function):
            if other.function_space.dim() != self.function_space.dim():
                raise ShapeMismatch("assigning a function from a different space")
            self.array[:] = other.array
        else:
            self.array[:] = np.asarray(other, dtype=float)

    def interpolate(self, source):
        self.array[:] = interpolate(source, self.function_space).array
        return self

    def split(self):
        return split_mixed(self)

    def __call__(self, *args):
        if len(args) == 1 and isinstance(args[0], str) and args[0] in SIDES:
            return restrict(self, args[0])
        return eval_at(self, _parse_point(args))

    def eval_cell(self, cell, xi):
        """Value at reference points ``xi`` of ``cell``, ``(npts, *value_shape)``."""
        V = self.function_space
        vals = V.element.tabulate(np.atleast_2d(xi))
        w = self.array[V.dofmap.cell_dofs_table[cell]]
        out = np.einsum("n,pnv->pv", w, vals)
        return out.reshape((len(out),) + V.element.value_shape)


class Expression(PointCoefficient):
    """Coefficient given by a formula string (or tuple of strings) over ``x``,
    or by a vectorised callable ``f(X) -> (npts, *shape)``.

    ``degree`` is the polynomial degree assumed for quadrature estimation.
    """

    __slots__ = ("text", "function")

    def __init__(self, formula, degree=2, shape=None, name=None):
        self.function = None
        self.text = None
        if callable(formula):
            shape = () if shape is None else tuple(shape)
            super().__init__(shape, degree, name)
            self.function = formula
        else:
            sym = parse_expression(formula, shape)
            super().__init__(sym.shape, degree, name, symbolic=sym)
            self.text = formula

    def eval_points(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.function is not None:
            v = np.asarray(self.function(points), dtype=float)
            return v.reshape((len(points),) + self.shape)
        return evaluate_spatial(self.symbolic, points)

    def __call__(self, *args):
        if len(args) == 1 and isinstance(args[0], str) and args[0] in SIDES:
            return restrict(self, args[0])
        return eval_at(self, _parse_point(args))

    def __str__(self):
        return self.name if self.text is None else f"Expression({self.text!r})"


def _values_at(source, points):
    """Values of a source at physical points, ``(npts, value_size)``."""
    points = np.atleast_2d(points)
    if isinstance(source, PointCoefficient):
        v = source.eval_points(points)
    elif isinstance(source, Constant):
        v = np.broadcast_to(source.value, (len(points),) + source.shape)
    elif isinstance(source, Function):
        v = np.array([eval_at(source, p) for p in points])
    elif isinstance(source, numbers.Real):
        v = np.full((len(points),), float(source))
    else:
        raise TypeError(f"cannot evaluate {type(source).__name__}")
    return np.asarray(v, dtype=float).reshape(len(points), -1)


def eval_at(f, point):
    """Value of a Function, Expression or Constant at a physical point."""
    p = np.asarray(point, dtype=float).reshape(-1)
    if isinstance(f, Function):
        mesh = f.function_space.mesh
        if len(p) != mesh.gdim:
            raise ShapeMismatch(f"point of dimension {len(p)} on a {mesh.gdim}-d mesh")
        cell, xi = _locator(mesh).locate(p)
        v = f.eval_cell(cell, xi)[0]
        return float(v) if v.shape == () else v
    if isinstance(f, PointCoefficient):
        v = f.eval_points(p[None])[0]
        return float(v) if np.ndim(v) == 0 else v
    if isinstance(f, Constant):
        return float(f.value) if f.shape == () else f.value.copy()
    raise TypeError(f"cannot evaluate {type(f).__name__}")


def _as_source(source):
    if isinstance(source, (str, tuple, list)):
        return Expression(source)
    if callable(source) and not isinstance(source, (Function, PointCoefficient, Constant)):
        return Expression(source)
    return source


def _value_size(source):
    if isinstance(source, numbers.Real):
        return 1
    return int(np.prod(source.shape, dtype=int))


def interpolate(source, V) -> Function:
    """Nodal interpolation of an Expression, Constant, number or Function into ``V``."""
    source = _as_source(source)
    if V.is_view:
        V = V.collapse()
    el = V.element
    vs = _value_size(source)
    if vs != el.value_size and not (isinstance(source, numbers.Real) or vs == 1 and el.value_size == 1):
        raise ShapeMismatch(f"source of value size {vs} into space of value size {el.value_size}")
    if isinstance(source, Function):
        return _interpolate_function(source, V)
    coords = V.tabulate_dof_coordinates()
    comps = V.dofmap.dof_components()
    vals = _values_at(source, coords)
    if vals.shape[1] == 1:
        out = vals[:, 0]
    else:
        out = vals[np.arange(len(coords)), comps]
    return Function(V, out)


def _interpolate_function(f, V):
    """Cellwise interpolation of a Function on the same mesh."""
    W = f.function_space
    if W.mesh is not V.mesh:
        raise Unsupported("interpolation between different meshes")
    if W.element == V.element:
        return Function(V, f.array.copy())
    el = V.element
    phi = W.element.tabulate(el.dof_points)                     # (p, n_src, vs)
    w = f.array[W.dofmap.cell_dofs_table]                        # (C, n_src)
    vals = np.einsum("cn,pnv->cpv", w, phi)                      # (C, p, vs)
    local = vals[:, np.arange(el.space_dim), el.dof_components]  # (C, p)
    out = np.zeros(V.dim())
    out[V.dofmap.cell_dofs_table] = local
    return Function(V, out)


def project(source, V, method=None, precond="jacobi", rtol=1e-12, atol=1e-50, maxit=None):
    """L2 projection: solve ``inner(v, u) dx = inner(v, source) dx``."""
    from femkit.assembly import VariationalProblem
    from femkit.form import dx, inner

    source = _as_source(source)
    if isinstance(source, numbers.Real):
        source = Constant(float(source))
    if V.is_view:
        V = V.collapse()
    v, u = TestFunction(V), TrialFunction(V)
    a = inner(v, u) * dx
    L = inner(v, source) * dx
    problem = VariationalProblem(a, L, method=method, precond=precond, rtol=rtol, atol=atol,
                                 maxit=maxit)
    return problem.solve()


def split_mixed(f: Function):
    """Copies of the sub-function blocks of a mixed Function."""
    V = f.function_space
    if not V.element.is_compound():
        raise NotMixed("function is not on a mixed space")
    out = []
    for i in range(V.num_sub_spaces()):
        sub = V.sub(i)
        dm = sub.dofmap
        out.append(Function(sub.collapse(), f.array[dm.offset:dm.offset + dm.size].copy()))
    return out


def join_mixed(V, parts):
    """Inverse of :func:`split_mixed`: a Function on ``V`` from sub-functions."""
    return Function(V, np.concatenate([p.array for p in parts]))


__all__ = [
    "Expression", "Function", "FunctionSpace", "MixedFunctionSpace", "TestFunction",
    "TestFunctions", "TrialFunction", "TrialFunctions", "VectorFunctionSpace", "create_space",
    "eval_at", "interpolate", "join_mixed", "project", "split", "split_mixed", "reference",
]
