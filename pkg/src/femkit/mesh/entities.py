"""Views of mesh entities, iterators over them, and mesh functions."""
from __future__ import annotations

import numpy as np

from femkit.errors import IndexOutOfRange, ShapeMismatch


class MeshEntity:
    """The pair ``(dim, index)`` on a given mesh; never stored, only a view."""

    __slots__ = ("mesh", "dim", "index")

    def __init__(self, mesh, dim, index):
        n = mesh.num_entities(dim)
        if not 0 <= index < n:
            raise IndexOutOfRange(f"entity ({dim}, {index}) out of range 0..{n - 1}")
        self.mesh = mesh
        self.dim = dim
        self.index = int(index)

    def entities(self, d):
        """Indices of incident entities of dimension ``d``."""
        if d == self.dim:
            return np.array([self.index])
        return self.mesh.connectivity(self.dim, d)[self.index]

    def midpoint(self):
        v = self.entities(0)
        return self.mesh.coordinates[v].mean(axis=0)

    def __eq__(self, other):
        return (isinstance(other, MeshEntity) and other.mesh is self.mesh
                and other.dim == self.dim and other.index == self.index)

    def __hash__(self):
        return hash((id(self.mesh), self.dim, self.index))

    def __repr__(self):
        return f"{type(self).__name__}({self.dim}, {self.index})"


class Vertex(MeshEntity):
    def __init__(self, mesh, index):
        super().__init__(mesh, 0, index)

    def point(self):
        return self.mesh.coordinates[self.index]


class Edge(MeshEntity):
    def __init__(self, mesh, index):
        super().__init__(mesh, 1, index)


class Face(MeshEntity):
    def __init__(self, mesh, index):
        super().__init__(mesh, 2, index)


class Facet(MeshEntity):
    def __init__(self, mesh, index):
        super().__init__(mesh, mesh.tdim - 1, index)


class Cell(MeshEntity):
    def __init__(self, mesh, index):
        super().__init__(mesh, mesh.tdim, index)


def _source(obj):
    if isinstance(obj, MeshEntity):
        return obj.mesh, obj
    return obj, None


def entities(obj, d):
    """Iterate over dimension-``d`` entities of a mesh, or incident to an entity."""
    mesh, ent = _source(obj)
    idx = range(mesh.num_entities(d)) if ent is None else ent.entities(d)
    for i in idx:
        yield MeshEntity(mesh, d, int(i))


def vertices(obj):
    mesh, _ = _source(obj)
    for e in entities(obj, 0):
        yield Vertex(mesh, e.index)


def edges(obj):
    mesh, _ = _source(obj)
    for e in entities(obj, 1):
        yield Edge(mesh, e.index)


def faces(obj):
    mesh, _ = _source(obj)
    for e in entities(obj, 2):
        yield Face(mesh, e.index)


def facets(obj):
    mesh, _ = _source(obj)
    for e in entities(obj, mesh.tdim - 1):
        yield Facet(mesh, e.index)


def cells(obj):
    mesh, _ = _source(obj)
    for e in entities(obj, mesh.tdim):
        yield Cell(mesh, e.index)


class MeshFunction:
    """A value per mesh entity of one dimension."""

    def __init__(self, mesh, dim, values=None, dtype=float):
        n = mesh.num_entities(dim)
        if values is None:
            values = np.zeros(n, dtype=dtype)
        values = np.array(values, dtype=dtype if dtype is not None else None)
        if values.shape != (n,):
            raise ShapeMismatch(f"MeshFunction needs {n} values, got {values.shape}")
        self.mesh = mesh
        self.dim = dim
        self.values = values

    def __getitem__(self, entity):
        return self.values[entity.index if isinstance(entity, MeshEntity) else entity]

    def __setitem__(self, entity, value):
        self.values[entity.index if isinstance(entity, MeshEntity) else entity] = value

    def __len__(self):
        return len(self.values)

    def where(self, value=True):
        return np.nonzero(self.values == value)[0]

    def __repr__(self):
        return f"MeshFunction(dim={self.dim}, size={len(self.values)}, dtype={self.values.dtype})"
