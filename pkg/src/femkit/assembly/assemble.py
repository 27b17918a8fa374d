"""Global assembly of forms over cells, exterior facets and interior facets."""
from __future__ import annotations

import logging
import numbers
from collections import OrderedDict

import numpy as np

from femkit import reference
from femkit.compiler.kernel import compile_integral, facet_permutations
from femkit.dofmap import interior_facet_cells, sparsity_pattern
from femkit.errors import MeshMismatch, ShapeMismatch, UnboundCoefficient
from femkit.form import algorithms
from femkit.form.expr import Coefficient, Constant, PointCoefficient
from femkit.form.form import Form
from femkit.function import Expression, Function, FunctionSpace
from femkit.la import Matrix, Vector

log = logging.getLogger("femkit.assembly")

KERNEL_CACHE_SIZE = 128
_KERNEL_CACHE: OrderedDict = OrderedDict()


# ---------------------------------------------------------------------------
# binding placeholders to values
# ---------------------------------------------------------------------------
def _as_value(placeholder, value):
    if isinstance(value, (Function, PointCoefficient, Constant)):
        bound = value
    elif isinstance(value, (numbers.Real, np.ndarray)) or (
            isinstance(value, (list, tuple)) and all(isinstance(v, numbers.Real) for v in value)):
        name = placeholder.name if isinstance(placeholder, Constant) else None
        bound = Constant(value, name=name)
    elif isinstance(value, (str, tuple, list)):
        deg = placeholder.element.degree + 1 if isinstance(placeholder, Coefficient) else 2
        bound = Expression(value, degree=deg)
    elif callable(value):
        deg = placeholder.element.degree + 1 if isinstance(placeholder, Coefficient) else 2
        bound = Expression(value, degree=deg, shape=placeholder.shape)
    else:
        raise TypeError(f"cannot bind {type(value).__name__} to {placeholder}")
    if bound.shape != placeholder.shape:
        raise ShapeMismatch(f"{placeholder} has shape {placeholder.shape}, bound value {bound.shape}")
    return bound


def bind(form: Form, coefficients=None) -> Form:
    """Replace placeholder coefficients/constants by values.

    ``coefficients`` maps placeholders (or their names) to Functions,
    Expressions, Constants, numbers, formula strings or callables; a
    sequence is matched against ``form.coefficients()`` in order.
    """
    if not coefficients:
        return form
    holders = form.coefficients() + form.constants()
    if not isinstance(coefficients, dict):
        coefficients = dict(zip(form.coefficients(), coefficients))
    by_name = {}
    for h in holders:
        by_name.setdefault(h.name, h)
    mapping = {}
    for k, v in coefficients.items():
        h = by_name.get(k) if isinstance(k, str) else k
        if h is None or h not in holders:
            continue
        if v is h:
            continue
        mapping[h] = _as_value(h, v)
    return algorithms.replace_form(form, mapping) if mapping else form


# ---------------------------------------------------------------------------
# spaces and mesh
# ---------------------------------------------------------------------------
def _space_for(mesh, element):
    cache = mesh.__dict__.setdefault("_femkit_spaces", {})
    key = element.descriptor
    if key not in cache:
        cache[key] = FunctionSpace(mesh, element)
    return cache[key]


def _resolve(form, spaces, mesh):
    """Argument spaces (test, trial) and the mesh of a bound form."""
    if spaces is not None and not isinstance(spaces, (list, tuple)):
        spaces = [spaces]
    meshes = []
    if mesh is not None:
        meshes.append(mesh)
    args = {a.number: a for a in form.arguments()}
    for f in form.coefficients():
        if isinstance(f, Function):
            meshes.append(f.function_space.mesh)
    for a in args.values():
        if isinstance(a.space, FunctionSpace):
            meshes.append(a.space.mesh)
    if spaces:
        meshes.extend(s.mesh for s in spaces)
    if not meshes:
        raise MeshMismatch("no mesh: pass mesh= or spaces=, or bind a Function")
    mesh = meshes[0]
    if any(m is not mesh for m in meshes):
        raise MeshMismatch("form objects live on different meshes")
    out = []
    for n in sorted(args):
        a = args[n]
        if isinstance(a.space, FunctionSpace):
            V = a.space
        elif spaces and len(spaces) > n:
            V = spaces[n]
        elif spaces and len(spaces) == 1:
            V = spaces[0]
        else:
            V = _space_for(mesh, a.element)
        if V.element != a.element:
            raise ShapeMismatch(f"argument {n} on {a.element}, space has {V.element}")
        if V.is_view:
            raise ShapeMismatch("arguments must live on whole spaces, not sub-space views")
        out.append(V)
    return out, mesh


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------
def _form_key(form):
    return tuple((i.kind, i.subdomain, i.integrand.key) for i in form.integrals)


def compiled_kernels(form: Form, tdim, gdim):
    """Kernels of a bound form, cached on the structural form key."""
    key = (_form_key(form), tdim, gdim)
    hit = _KERNEL_CACHE.get(key)
    if hit is not None:
        _KERNEL_CACHE.move_to_end(key)
        return hit
    meta = algorithms.check_form(form)
    kernels = [compile_integral(group, meta, tdim=tdim, gdim=gdim)
               for group in algorithms.group_integrals(form).values()]
    _KERNEL_CACHE[key] = (meta, kernels)
    if len(_KERNEL_CACHE) > KERNEL_CACHE_SIZE:
        _KERNEL_CACHE.popitem(last=False)
    log.debug("compiled %d kernel(s)", len(kernels))
    return meta, kernels


def _check_bound(kernel, mesh):
    for f in kernel.coefficient_objects:
        if not isinstance(f, Function):
            raise UnboundCoefficient(f"coefficient {f} has no value; bind it with coefficients=")
        if f.function_space.mesh is not mesh:
            raise MeshMismatch(f"coefficient {f} lives on another mesh")
    for p in kernel.point_objects:
        if type(p).eval_points is PointCoefficient.eval_points:
            raise UnboundCoefficient(f"point coefficient {p} cannot be evaluated")


# ---------------------------------------------------------------------------
# integration entities
# ---------------------------------------------------------------------------
def _select(markers, sub, n, what):
    if sub is None:
        return np.ones(n, dtype=bool)
    if markers is None:
        raise ValueError(f"integral over {what} subdomain {sub} needs markers")
    return np.asarray(markers.values) == sub


def _local_facets(mesh, cells, facets):
    c2f = mesh.connectivity(mesh.tdim, mesh.tdim - 1).as_array()
    return np.argmax(c2f[cells] == facets[:, None], axis=1)


def _entity_batches(kernel, mesh, markers):
    """Per-kind integration data: (cells, table index, minus cells, minus table index)."""
    D = mesh.tdim
    if kernel.kind == "cell":
        sel = _select(markers.get("cell"), kernel.subdomain, mesh.num_cells(), "cell")
        cells = np.nonzero(sel)[0]
        return cells, np.zeros(len(cells), dtype=np.int64), None, None
    f2c = mesh.connectivity(D - 1, D)
    sizes = f2c.sizes()
    if kernel.kind == "exterior_facet":
        sel = _select(markers.get("exterior_facet"), kernel.subdomain, len(sizes), "facet")
        facets = np.nonzero(sel & (sizes == 1))[0]
        cells = f2c.indices[f2c.offsets[facets]]
        return cells, _local_facets(mesh, cells, facets), None, None
    facets, plus, minus = interior_facet_cells(mesh)
    sel = _select(markers.get("interior_facet"), kernel.subdomain, len(sizes), "facet")[facets]
    facets, plus, minus = facets[sel], plus[sel], minus[sel]
    fp = _local_facets(mesh, plus, facets)
    fm = _local_facets(mesh, minus, facets)
    fv = np.array(reference.sub_entities(D, D - 1))
    gp = np.take_along_axis(mesh.cells[plus], fv[fp], axis=1)
    gm = np.take_along_axis(mesh.cells[minus], fv[fm], axis=1)
    perm = np.argmax(gp[:, :, None] == gm[:, None, :], axis=2)        # (F, D)
    codes = {p: i for i, p in enumerate(facet_permutations(D))}
    pidx = np.array([codes[tuple(p)] for p in perm.tolist()], dtype=np.int64)
    nperm = kernel.nperm
    return plus, fp * nperm, minus, fm * nperm + pidx


def _coefficient_values(kernel, cells):
    return [f.array[f.function_space.dofmap.cell_dofs_table[cells]]
            for f in kernel.coefficient_objects]


def element_tensors(kernel, mesh, markers=None):
    """Element tensors of one kernel with their test/trial dof rows.

    Returns ``(tensors (C, *shape), cells_plus, cells_minus)``.
    """
    markers = markers or {}
    cells, tidx, minus, tidx_m = _entity_batches(kernel, mesh, markers)
    X = mesh.cell_coordinates(cells)
    coefs = _coefficient_values(kernel, cells)
    if kernel.kind == "interior_facet":
        Xm = mesh.cell_coordinates(minus)
        cm = _coefficient_values(kernel, minus)
        T = kernel.evaluate(X, tidx, coefs, None, None, Xm, tidx_m, cm)
    else:
        T = kernel.evaluate(X, tidx, coefs)
    return T, cells, minus


def _dofs(V, cells, minus):
    table = V.dofmap.cell_dofs_table
    if minus is None:
        return table[cells]
    return np.hstack([table[cells], table[minus]])


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------
def _markers(cell_markers, facet_markers, interior_facet_markers):
    return {"cell": cell_markers, "exterior_facet": facet_markers,
            "interior_facet": interior_facet_markers if interior_facet_markers is not None
            else facet_markers}


def assemble(form: Form, coefficients=None, spaces=None, mesh=None, cell_markers=None,
             facet_markers=None, interior_facet_markers=None, tensor=None, bc_data=None,
             lift=None):
    """Assemble a form into a float (rank 0), a Vector (rank 1) or a Matrix (rank 2).

    ``bc_data = (constrained mask, prescribed values)`` applies the
    symmetric element-level boundary treatment to a rank-2 form, adding the
    lifting ``-A[:, bc] g`` into the Vector ``lift``.
    """
    form = bind(form, coefficients)
    Vs, mesh = _resolve(form, spaces, mesh)
    meta, kernels = compiled_kernels(form, mesh.tdim, mesh.gdim)
    markers = _markers(cell_markers, facet_markers, interior_facet_markers)
    rank = meta.rank
    if tensor is None:
        if rank == 0:
            tensor = 0.0
        elif rank == 1:
            tensor = Vector(Vs[0].dim())
        else:
            pattern = sparsity_pattern(Vs[0].dofmap, Vs[1].dofmap,
                                       any(k.kind == "interior_facet" for k in kernels))
            tensor = Matrix(pattern)
    for k in kernels:
        _check_bound(k, mesh)
        T, cells, minus = element_tensors(k, mesh, markers)
        if len(T) == 0:
            continue
        if rank == 0:
            tensor += float(T.sum())
        elif rank == 1:
            tensor.add_local(T, _dofs(Vs[0], cells, minus))
        else:
            rows = _dofs(Vs[0], cells, minus)
            cols = _dofs(Vs[1], cells, minus)
            if bc_data is not None:
                T = _constrain(T, rows, cols, bc_data, lift)
            tensor.add_local(T, rows, cols)
    return tensor


def _constrain(T, rows, cols, bc_data, lift):
    """Zero constrained rows/columns of element matrices, lifting known values."""
    mask, g = bc_data
    T = T.copy()
    mc = mask[cols]
    gc = np.where(mc, g[cols], 0.0)
    if lift is not None and mc.any():
        contrib = -np.einsum("cij,cj->ci", T, gc)
        contrib[mask[rows]] = 0.0
        lift.add_local(contrib, rows)
    T[np.broadcast_to(mask[rows][:, :, None], T.shape)] = 0.0
    T[np.broadcast_to(mc[:, None, :], T.shape)] = 0.0
    return T


__all__ = ["assemble", "bind", "compiled_kernels", "element_tensors"]
