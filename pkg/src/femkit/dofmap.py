"""Global degree-of-freedom numbering.

Scalar elements: for every entity dimension ``d`` carrying dofs, entities
are numbered in mesh order and the dofs inside an entity in a canonical
order fixed by the sorted global vertex indices of the entity, so every
cell sharing the entity agrees. Vector and mixed elements number their
sub-elements block by block: all of sub-element 0, then sub-element 1, ...
"""
from __future__ import annotations

import itertools

import numpy as np

from femkit import reference
from femkit.errors import IndexOutOfRange, ShapeMismatch
from femkit.la import SparsityPattern


class DofMap:
    """Local-to-global dof map of one element on one mesh.

    ``cell_dofs_table[c]`` holds the global dofs of cell ``c`` in element
    order. A sub-dofmap (``sub(i)``) is a view into its parent's numbering:
    its indices lie in ``[offset, offset + size)`` of a space of dimension
    ``global_dim``.
    """

    def __init__(self, element, mesh, cell_dofs_table, global_dim, offset=0, size=None, subs=()):
        self.element = element
        self.mesh = mesh
        self.cell_dofs_table = cell_dofs_table
        self.global_dim = int(global_dim)
        self.offset = int(offset)
        self.size = int(global_dim if size is None else size)
        self._subs = tuple(subs)

    @property
    def is_view(self):
        return self.size != self.global_dim

    def cell_dofs(self, cell):
        if not 0 <= cell < len(self.cell_dofs_table):
            raise IndexOutOfRange(f"cell {cell} out of range")
        return self.cell_dofs_table[cell]

    def num_sub_dofmaps(self):
        return len(self._subs)

    def sub(self, i):
        return self._subs[i]

    def collapse(self):
        """Stand-alone copy of a view, renumbered to ``0..size-1``."""
        shifted = self.cell_dofs_table - self.offset
        subs = tuple(_rebase(s, -self.offset, self.size) for s in self._subs)
        return DofMap(self.element, self.mesh, shifted, self.size, 0, self.size, subs)

    def dofs(self):
        return np.arange(self.offset, self.offset + self.size)

    def tabulate_dof_coordinates(self):
        """Physical coordinates of every dof of the root space, ``(global_dim, gdim)``.

        Entries outside this (view) block are NaN.
        """
        mesh = self.mesh
        X = mesh.cell_coordinates()
        lam = reference.barycentric(mesh.tdim, self.element.dof_points)
        pts = np.einsum("pv,cvg->cpg", lam, X)
        out = np.full((self.global_dim, mesh.gdim), np.nan)
        out[self.cell_dofs_table.reshape(-1)] = pts.reshape(-1, mesh.gdim)
        return out

    def dof_components(self):
        """Flattened value-component index of every dof (-1 outside this block)."""
        out = -np.ones(self.global_dim, dtype=np.int64)
        comps = np.broadcast_to(self.element.dof_components, self.cell_dofs_table.shape)
        out[self.cell_dofs_table.reshape(-1)] = comps.reshape(-1)
        return out

    def __repr__(self):
        return f"DofMap({self.element}, dim={self.size}, offset={self.offset})"


def _rebase(dm, shift, global_dim):
    subs = tuple(_rebase(s, shift, global_dim) for s in dm._subs)
    return DofMap(dm.element, dm.mesh, dm.cell_dofs_table + shift, global_dim,
                  dm.offset + shift, dm.size, subs)


def _entity_table(mesh, d):
    D = mesh.tdim
    if d == D:
        return np.arange(mesh.num_cells())[:, None]
    if d == 0:
        return mesh.cells
    return mesh.connectivity(D, d).as_array()


def _canonical_ranks(keys):
    """For each ordering permutation of the entity vertices, the canonical
    position of every local dof on that entity."""
    nv = len(keys[0])
    table = {}
    for perm in itertools.permutations(range(nv)):
        canon = [tuple(k[p] for p in perm)[::-1] for k in keys]
        order = sorted(range(len(keys)), key=lambda j: canon[j])
        rank = np.empty(len(keys), dtype=np.int64)
        rank[order] = np.arange(len(keys))
        table[perm] = rank
    return table


def _build_scalar(element, mesh, offset):
    D = mesh.tdim
    ncells = mesh.num_cells()
    cells = mesh.cells
    table = np.empty((ncells, element.space_dim), dtype=np.int64)
    off = offset
    for d in range(D + 1):
        k_d = element.num_entity_dofs(d)
        if k_d == 0:
            continue
        ents = _entity_table(mesh, d)
        for k in range(reference.num_sub_entities(D, d)):
            local = element.entity_dofs[(d, k)]
            base = off + ents[:, k][:, None] * k_d
            if k_d == 1 or d == D:
                table[:, local] = base + np.arange(k_d)
                continue
            verts = cells[:, list(reference.sub_entities(D, d)[k])]
            perms = np.argsort(verts, axis=1, kind="stable")
            ranks = _canonical_ranks(element.entity_dof_keys[(d, k)])
            pos = np.empty((ncells, k_d), dtype=np.int64)
            codes = perms @ (len(verts[0]) ** np.arange(d + 1))
            for code in np.unique(codes):
                sel = codes == code
                perm = tuple(int(p) for p in perms[np.argmax(sel)])
                pos[sel] = ranks[perm]
            table[:, local] = base + pos
        off += k_d * mesh.num_entities(d)
    return table, off - offset


def _build(element, mesh, offset):
    if not element.is_compound():
        table, size = _build_scalar(element, mesh, offset)
        return table, size, ()
    tables, subs = [], []
    off = offset
    for s in element.sub_elements:
        t, size, ss = _build(s, mesh, off)
        tables.append(t)
        subs.append((s, t, off, size, ss))
        off += size
    return np.hstack(tables), off - offset, tuple(subs)


def _wrap(element, mesh, table, global_dim, offset, size, subs):
    return DofMap(element, mesh, table, global_dim, offset, size,
                  tuple(_wrap(s, mesh, t, global_dim, o, n, ss) for s, t, o, n, ss in subs))


def build_dofmap(element, mesh):
    if element.tdim != mesh.tdim:
        raise ShapeMismatch(f"element cell {element.cell} does not match mesh {mesh.cell_name}")
    table, size, subs = _build(element, mesh, 0)
    return _wrap(element, mesh, table, size, 0, size, subs)


def cell_dofs(dofmap, cell_index):
    return dofmap.cell_dofs(cell_index)


def interior_facet_cells(mesh):
    """Interior facets with their ('+', '-') cells; '+' is the smaller index."""
    D = mesh.tdim
    f2c = mesh.connectivity(D - 1, D)
    sizes = f2c.sizes()
    facets = np.nonzero(sizes == 2)[0]
    pairs = f2c.indices[f2c.offsets[facets][:, None] + np.arange(2)]
    return facets, pairs.min(axis=1), pairs.max(axis=1)


def boundary_dofs(dofmap, facet_markers, value=True):
    """Dofs whose reference dof point lies on a marked facet of an incident cell.

    Returns ``(dofs, coordinates)`` with sorted unique global indices.
    """
    mesh = dofmap.mesh
    D = mesh.tdim
    marked = np.nonzero(np.asarray(facet_markers.values) == value)[0]
    if len(marked) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, mesh.gdim))
    f2c = mesh.connectivity(D - 1, D)
    c2f = mesh.connectivity(D, D - 1).as_array()
    element = dofmap.element
    local_facet_dofs = [element.facet_dofs(k) for k in range(D + 1)]
    found = []
    for f in marked:
        for c in f2c[f]:
            k = int(np.nonzero(c2f[c] == f)[0][0])
            found.append(dofmap.cell_dofs_table[c, local_facet_dofs[k]])
    dofs = np.unique(np.concatenate(found)) if found else np.zeros(0, dtype=np.int64)
    coords = dofmap.tabulate_dof_coordinates()[dofs]
    return dofs, coords


def sparsity_pattern(test_dofmap, trial_dofmap, has_interior_facet_terms=False, diagonal=True):
    """Nonzero structure of ``test x trial`` couplings over cells (and interior facets)."""
    rows_t = test_dofmap.cell_dofs_table
    cols_t = trial_dofmap.cell_dofs_table
    nr, nc = test_dofmap.global_dim, trial_dofmap.global_dim
    keys = [(rows_t[:, :, None] * nc + cols_t[:, None, :]).reshape(-1)]
    if has_interior_facet_terms:
        _, plus, minus = interior_facet_cells(test_dofmap.mesh)
        r = np.hstack([rows_t[plus], rows_t[minus]])
        c = np.hstack([cols_t[plus], cols_t[minus]])
        keys.append((r[:, :, None] * nc + c[:, None, :]).reshape(-1))
    if diagonal and nr == nc:
        keys.append(np.arange(nr) * nc + np.arange(nr))
    return SparsityPattern.from_keys(np.concatenate(keys), nr, nc)
