"""Dirichlet boundary conditions."""
from __future__ import annotations

import inspect
import numbers
import warnings

import numpy as np

from femkit.dofmap import boundary_dofs
from femkit.errors import EmptyBoundary, MissingDiagonal, OutsidePattern, ShapeMismatch
from femkit.form.expr import Constant, PointCoefficient
from femkit.function import Expression, Function, _values_at
from femkit.la import Matrix, Vector
from femkit.mesh import MeshFunction

BC_TOL = 1e-10


class DomainBoundary:
    """Predicate selecting the whole boundary."""

    def __call__(self, x, on_boundary):
        return on_boundary


def near(a, b, tol=BC_TOL):
    return abs(a - b) < tol


def _predicate(region):
    if isinstance(region, str):
        if region != "on_boundary":
            raise ValueError(f"unknown region {region!r}")
        return DomainBoundary()
    try:
        nparams = len(inspect.signature(region).parameters)
    except (TypeError, ValueError):
        nparams = 2
    if nparams == 1:
        return lambda x, on_boundary: region(x)
    return region


def _as_bc_value(value, shape):
    if isinstance(value, (Function, PointCoefficient, Constant)):
        v = value
    elif isinstance(value, numbers.Real):
        v = Constant(np.full(shape, float(value)) if shape else float(value))
    elif isinstance(value, (str, tuple, list)) and all(isinstance(s, str) for s in np.atleast_1d(value)):
        v = Expression(value)
    elif isinstance(value, (tuple, list, np.ndarray)):
        v = Constant(value)
    elif callable(value):
        v = Expression(value, shape=shape)
    else:
        raise TypeError(f"unsupported boundary value {type(value).__name__}")
    if v.shape != tuple(shape):
        raise ShapeMismatch(f"boundary value of shape {v.shape} for a space of shape {shape}")
    return v


class DirichletBC:
    """``u = value`` on a boundary region of (a sub-space of) a function space.

    ``region`` is a predicate ``inside(x, on_boundary)`` (or ``inside(x)``),
    the string ``"on_boundary"``, or a facet MeshFunction together with the
    ``marker`` value. ``method="topological"`` constrains the dofs of
    facets whose vertices all satisfy the predicate; ``"pointwise"``
    constrains every dof whose coordinates satisfy it.
    """

    def __init__(self, V, value, region, marker=None, method="topological"):
        if method not in ("topological", "pointwise"):
            raise ValueError(f"unknown method {method!r}")
        if isinstance(region, MeshFunction) and method == "pointwise":
            raise ValueError("pointwise conditions need a predicate")
        self.V = V
        self.value = _as_bc_value(value, V.element.value_shape)
        self.region = region
        self.marker = marker
        self.method = method
        self._cache = None

    def _facet_markers(self):
        mesh = self.V.mesh
        D = mesh.tdim
        if isinstance(self.region, MeshFunction):
            if self.region.dim != D - 1:
                raise ShapeMismatch("boundary markers must live on facets")
            return self.region, self.marker if self.marker is not None else 1
        inside = _predicate(self.region)
        exterior = mesh.connectivity(D - 1, D).sizes() == 1
        f2v = mesh.connectivity(D - 1, 0).as_array()
        X = mesh.coordinates
        on_ext = np.zeros(mesh.num_vertices(), dtype=bool)
        on_ext[np.unique(f2v[exterior])] = True
        flags = {}
        for flag in (True, False):
            verts = np.nonzero(on_ext)[0] if flag else np.arange(mesh.num_vertices())
            vals = np.zeros(mesh.num_vertices(), dtype=bool)
            for v in verts:
                vals[v] = bool(inside(X[v], flag))
            flags[flag] = vals
        marked = np.where(exterior, flags[True][f2v].all(axis=1), flags[False][f2v].all(axis=1))
        return MeshFunction(mesh, D - 1, marked, dtype=bool), True

    def _dofs(self):
        if self.method == "pointwise":
            inside = _predicate(self.region)
            dm = self.V.dofmap
            coords = self.V.tabulate_dof_coordinates()
            dofs = np.array([d for d in dm.dofs() if inside(coords[d], False)], dtype=np.int64)
            return dofs, coords[dofs]
        markers, value = self._facet_markers()
        return boundary_dofs(self.V.dofmap, markers, value)

    def dofs_and_values(self):
        """Constrained global dofs (sorted) and their prescribed values."""
        if self._cache is None:
            dofs, coords = self._dofs()
            if len(dofs) == 0:
                warnings.warn("Dirichlet condition selects no degrees of freedom", EmptyBoundary,
                              stacklevel=3)
            self._cache = (dofs, coords)
        dofs, coords = self._cache
        return dofs, self._values(dofs, coords)

    def _values(self, dofs, coords):
        if len(dofs) == 0:
            return np.zeros(0)
        v = self.value
        if isinstance(v, Function) and v.function_space.dim() == self.V.dofmap.size:
            return v.array[dofs - self.V.dofmap.offset].copy()
        comps = self.V.dofmap.dof_components()[dofs]
        vals = _values_at(v, coords)
        if vals.shape[1] == 1:
            return vals[:, 0].copy()
        return vals[np.arange(len(dofs)), comps]


def create_bc(V, value, region, marker=None, method="topological"):
    return DirichletBC(V, value, region, marker, method)


def bc_dofs(bc):
    return bc.dofs_and_values()


def collect_bcs(bcs, n):
    """Mask of constrained dofs and their values (later conditions win)."""
    mask = np.zeros(n, dtype=bool)
    g = np.zeros(n)
    for bc in bcs or ():
        dofs, vals = bc.dofs_and_values()
        mask[dofs] = True
        g[dofs] = vals
    return mask, g


def _set_rows(A: Matrix, rows):
    if len(rows) == 0:
        return
    counts = np.diff(A.indptr)[rows]
    pos = np.repeat(A.indptr[rows], counts) + (np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts))
    A.data[pos] = 0.0
    try:
        diag = A.locate(rows, rows)
    except OutsidePattern as exc:
        raise MissingDiagonal("constrained row without a diagonal entry in the pattern") from exc
    A.data[diag] = 1.0


def apply_bc(bc, A=None, b=None, x=None):
    """Impose ``bc`` on a matrix and/or vector.

    Constrained rows of ``A`` become unit rows; ``b`` receives the
    prescribed values, or ``g - x`` when the current iterate ``x`` is given
    (Newton increments).
    """
    bcs = bc if isinstance(bc, (list, tuple)) else [bc]
    for c in bcs:
        dofs, vals = c.dofs_and_values()
        if A is not None:
            _set_rows(A, dofs)
        if b is not None:
            arr = b.array if isinstance(b, Vector) else b
            if x is not None:
                xa = x.array if isinstance(x, Vector) else np.asarray(x)
                arr[dofs] = vals - xa[dofs]
            else:
                arr[dofs] = vals
    return A, b


__all__ = ["DirichletBC", "DomainBoundary", "apply_bc", "bc_dofs", "collect_bcs", "create_bc", "near"]
