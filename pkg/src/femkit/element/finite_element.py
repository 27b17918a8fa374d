"""Reference finite elements: CG_q, DG_q, CR_1 and vector/mixed compositions.

Supported degrees: CG 1..6, DG 0..6, CR 1. Nodes are the equispaced
principal lattice; the nodal basis is obtained by inverting the
Vandermonde matrix of the orthonormal basis at the nodes.

Local dof order of a scalar element: vertex dofs, then edge dofs, then
face dofs, then cell-interior dofs; entities in local reference order;
dofs inside an entity sorted along the entity's parameterisation
(increasing weight of its last vertex first). DG elements use the same
order but attach every dof to the cell.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from femkit import reference
from femkit.element.expansions import tabulate_orthonormal
from femkit.errors import BadDegree, PointOutsideReference, ShapeMismatch, UnsupportedFamily

MAX_DEGREE = 6
REFERENCE_TOL = 1e-12

_FAMILY_ALIASES = {
    "CG": "CG", "Lagrange": "CG", "P": "CG", "Q": "CG",
    "DG": "DG", "Discontinuous Lagrange": "DG",
    "CR": "CR", "Crouzeix-Raviart": "CR",
}


@dataclass(frozen=True)
class ElementDescriptor:
    family: str
    cell: str
    degree: int | None = None
    sub: tuple = ()

    def __str__(self):
        if self.family == "Vector":
            return f"Vector({self.sub[0]}, {len(self.sub)})"
        if self.family == "Mixed":
            return "Mixed(" + ", ".join(str(s) for s in self.sub) + ")"
        return f"{self.family}{self.degree}({self.cell})"


def _check_cell(cell):
    if cell not in reference.CELL_TDIM:
        raise UnsupportedFamily(f"unknown cell {cell!r}")
    return cell


def FiniteElement(family, cell, degree):
    """Scalar element ``family`` in {CG, DG, CR} (aliases such as "Lagrange" allowed)."""
    try:
        fam = _FAMILY_ALIASES[family]
    except KeyError:
        raise UnsupportedFamily(f"unsupported element family {family!r}") from None
    return create_element(ElementDescriptor(fam, _check_cell(cell), int(degree)))


def VectorElement(family, cell, degree, dim=None):
    sub = FiniteElement(family, cell, degree)
    dim = reference.CELL_TDIM[cell] if dim is None else int(dim)
    return create_element(ElementDescriptor("Vector", cell, sub.degree, (sub.descriptor,) * dim))


def MixedElement(*elements):
    if len(elements) == 1 and isinstance(elements[0], (list, tuple)):
        elements = tuple(elements[0])
    cells = {e.cell for e in elements}
    if len(cells) != 1:
        raise ShapeMismatch("all sub-elements of a mixed element must share the cell")
    desc = ElementDescriptor("Mixed", cells.pop(), max(e.degree for e in elements),
                             tuple(e.descriptor for e in elements))
    return create_element(desc)


@lru_cache(maxsize=None)
def create_element(descriptor: ElementDescriptor):
    fam = descriptor.family
    if fam in ("CG", "DG"):
        return LagrangeElement(descriptor)
    if fam == "CR":
        return CrouzeixRaviartElement(descriptor)
    if fam in ("Vector", "Mixed"):
        if not descriptor.sub:
            raise ShapeMismatch(f"{fam} element without sub-elements")
        return CompoundElement(descriptor)
    raise UnsupportedFamily(f"unsupported element family {fam!r}")


class _Element:
    """Common interface of reference elements."""

    descriptor: ElementDescriptor
    space_dim: int
    value_shape: tuple
    dof_points: np.ndarray       # (space_dim, tdim)
    dof_components: np.ndarray   # (space_dim,) flattened value component of each dof
    entity_dofs: dict            # (d, k) -> list of local dofs
    entity_dof_keys: dict        # (d, k) -> list of integer tuples ordering shared dofs
    sub_elements: tuple = ()

    @property
    def family(self):
        return self.descriptor.family

    @property
    def cell(self):
        return self.descriptor.cell

    @property
    def tdim(self):
        return reference.CELL_TDIM[self.descriptor.cell]

    @property
    def degree(self):
        return self.descriptor.degree

    @property
    def value_size(self):
        return int(np.prod(self.value_shape, dtype=int))

    def is_compound(self):
        return bool(self.sub_elements)

    def num_entity_dofs(self, d):
        counts = {len(v) for (dd, _), v in self.entity_dofs.items() if dd == d}
        return counts.pop() if counts else 0

    def facet_dofs(self, facet):
        """Local dofs whose reference dof point lies on local facet ``facet``."""
        lam = reference.barycentric(self.tdim, self.dof_points)
        opp = reference.facet_opposite_vertex(self.tdim, facet)
        return np.nonzero(np.abs(lam[:, opp]) < 1e-12)[0]

    def _check_points(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.tdim:
            raise ShapeMismatch(f"points must have {self.tdim} coordinates")
        lam = reference.barycentric(self.tdim, points)
        if np.any(lam < -REFERENCE_TOL):
            raise PointOutsideReference("tabulation point outside the reference cell")
        return points

    def tabulate(self, points, nderiv=0):
        """Basis values ``(npts, space_dim, value_size)`` and, for ``nderiv=1``,
        reference gradients ``(npts, space_dim, value_size, tdim)``."""
        points = self._check_points(points)
        vals, grads = self._tabulate(points)
        return (vals, grads) if nderiv else vals

    def __eq__(self, other):
        return isinstance(other, _Element) and other.descriptor == self.descriptor

    def __hash__(self):
        return hash(self.descriptor)

    def __str__(self):
        return str(self.descriptor)

    __repr__ = __str__


def _lattice(tdim, q):
    """Integer barycentric tuples ``(b_0, ..., b_tdim)`` summing to ``q``."""
    out = []
    for rest in itertools.product(range(q + 1), repeat=tdim):
        if sum(rest) <= q:
            out.append((q - sum(rest),) + rest)
    return out


class _ScalarNodal(_Element):
    value_shape = ()

    def _build_basis(self, nodes, modal_degree):
        self._modal_degree = modal_degree
        V = tabulate_orthonormal(self.tdim, modal_degree, nodes)[0].T
        self._coeffs = np.linalg.solve(V, np.eye(V.shape[0]))

    def _tabulate(self, points):
        T = tabulate_orthonormal(self.tdim, self._modal_degree, points)
        phi = np.einsum("dmp,mk->dpk", T, self._coeffs)
        vals = phi[0][:, :, None]
        grads = np.moveaxis(phi[1:], 0, -1)[:, :, None, :]
        return vals, grads


class LagrangeElement(_ScalarNodal):
    def __init__(self, descriptor):
        self.descriptor = descriptor
        q = descriptor.degree
        fam = descriptor.family
        if fam == "CG" and not 1 <= q <= MAX_DEGREE:
            raise BadDegree(f"CG degree must be in 1..{MAX_DEGREE}, got {q}")
        if fam == "DG" and not 0 <= q <= MAX_DEGREE:
            raise BadDegree(f"DG degree must be in 0..{MAX_DEGREE}, got {q}")
        tdim = self.tdim
        V = reference.reference_vertices(tdim)
        if q == 0:
            nodes = V.mean(axis=0, keepdims=True)
            self.entity_dofs = {(d, k): [] for d in range(tdim + 1)
                                for k in range(reference.num_sub_entities(tdim, d))}
            self.entity_dof_keys = {key: [] for key in self.entity_dofs}
            self.entity_dofs[(tdim, 0)] = [0]
            self.entity_dof_keys[(tdim, 0)] = [(0,)]
        else:
            records = []
            for b in _lattice(tdim, q):
                support = tuple(i for i in range(tdim + 1) if b[i] > 0)
                d = len(support) - 1
                k = reference.sub_entities(tdim, d).index(support)
                key = tuple(b[i] for i in support)
                records.append((d, k, key[::-1], key, b))
            records.sort(key=lambda r: (r[0], r[1], r[2]))
            nodes = np.array([np.array(r[4], dtype=float) @ V / q for r in records])
            self.entity_dofs, self.entity_dof_keys = {}, {}
            for d in range(tdim + 1):
                for k in range(reference.num_sub_entities(tdim, d)):
                    self.entity_dofs[(d, k)] = []
                    self.entity_dof_keys[(d, k)] = []
            for i, (d, k, _, key, _) in enumerate(records):
                if fam == "DG":
                    d, k = tdim, 0
                self.entity_dofs[(d, k)].append(i)
                self.entity_dof_keys[(d, k)].append(key if fam == "CG" else (i,))
        self.dof_points = nodes
        self.space_dim = len(nodes)
        self.dof_components = np.zeros(self.space_dim, dtype=np.int64)
        self._build_basis(nodes, q)


class CrouzeixRaviartElement(_ScalarNodal):
    def __init__(self, descriptor):
        self.descriptor = descriptor
        if descriptor.degree != 1:
            raise BadDegree(f"CR requires degree 1, got {descriptor.degree}")
        tdim = self.tdim
        V = reference.reference_vertices(tdim)
        facets = reference.sub_entities(tdim, tdim - 1)
        nodes = np.array([V[list(f)].mean(axis=0) for f in facets])
        self.entity_dofs = {(d, k): [] for d in range(tdim + 1)
                            for k in range(reference.num_sub_entities(tdim, d))}
        self.entity_dof_keys = {key: [] for key in self.entity_dofs}
        for k in range(len(facets)):
            self.entity_dofs[(tdim - 1, k)] = [k]
            self.entity_dof_keys[(tdim - 1, k)] = [(1,) * tdim]
        self.dof_points = nodes
        self.space_dim = len(nodes)
        self.dof_components = np.zeros(self.space_dim, dtype=np.int64)
        self._build_basis(nodes, 1)


class CompoundElement(_Element):
    """Block concatenation of sub-elements (vector or mixed)."""

    def __init__(self, descriptor):
        self.descriptor = descriptor
        subs = tuple(create_element(s) for s in descriptor.sub)
        if any(s.cell != descriptor.cell for s in subs):
            raise ShapeMismatch("sub-elements must share the cell")
        self.sub_elements = subs
        self.space_dim = sum(s.space_dim for s in subs)
        vsize = sum(s.value_size for s in subs)
        if descriptor.family == "Vector" and all(s.value_shape == () for s in subs):
            self.value_shape = (len(subs),)
        else:
            self.value_shape = (vsize,)
        self.dof_offsets = np.cumsum([0] + [s.space_dim for s in subs])
        self.component_offsets = np.cumsum([0] + [s.value_size for s in subs])
        self.dof_points = np.vstack([s.dof_points for s in subs])
        self.dof_components = np.concatenate(
            [s.dof_components + c for s, c in zip(subs, self.component_offsets)])
        self.entity_dofs = {}
        self.entity_dof_keys = {}
        tdim = self.tdim
        keys = [(d, k) for d in range(tdim + 1) for k in range(reference.num_sub_entities(tdim, d))]
        for key in keys:
            self.entity_dofs[key] = [i + int(o) for s, o in zip(subs, self.dof_offsets)
                                     for i in s.entity_dofs.get(key, [])]
            self.entity_dof_keys[key] = [k for s in subs for k in s.entity_dof_keys.get(key, [])]

    def _tabulate(self, points):
        n = len(points)
        vals = np.zeros((n, self.space_dim, self.value_size))
        grads = np.zeros((n, self.space_dim, self.value_size, self.tdim))
        for s, o, c in zip(self.sub_elements, self.dof_offsets, self.component_offsets):
            sv, sg = s._tabulate(points)
            vals[:, o:o + s.space_dim, c:c + s.value_size] = sv
            grads[:, o:o + s.space_dim, c:c + s.value_size, :] = sg
        return vals, grads

    def sub_dof_range(self, i):
        return int(self.dof_offsets[i]), int(self.dof_offsets[i + 1])

    def sub_component_range(self, i):
        return int(self.component_offsets[i]), int(self.component_offsets[i + 1])


def tabulate_basis(element, points, nderiv=0):
    return element.tabulate(points, nderiv)


def reference_dof_layout(element):
    return element.dof_points.copy(), {k: list(v) for k, v in element.entity_dofs.items()}
