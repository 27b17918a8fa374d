"""Simplex mesh storage with lazily computed, compressed-row connectivity."""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from femkit import reference
from femkit.errors import DimensionOutOfRange, IndexOutOfRange, ShapeMismatch


@dataclass(frozen=True)
class Connectivity:
    """Incidence relation stored as ``offsets`` + flat ``indices``."""

    offsets: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.offsets.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_array(cls, table):
        table = np.asarray(table, dtype=np.int64)
        n, w = table.shape
        return cls(np.arange(0, (n + 1) * w, w, dtype=np.int64), table.reshape(-1).copy())

    @classmethod
    def from_lists(cls, rows):
        lengths = np.array([len(r) for r in rows], dtype=np.int64)
        offsets = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        flat = np.fromiter((i for r in rows for i in r), dtype=np.int64, count=int(offsets[-1]))
        return cls(offsets, flat)

    def __len__(self):
        return len(self.offsets) - 1

    def __getitem__(self, i):
        return self.indices[self.offsets[i]:self.offsets[i + 1]]

    def sizes(self):
        return np.diff(self.offsets)

    def as_array(self):
        """Dense ``(n, width)`` view; only valid for constant row length."""
        sizes = self.sizes()
        if len(sizes) == 0:
            return self.indices.reshape(0, 0)
        w = int(sizes[0])
        if not np.all(sizes == w):
            raise ValueError("connectivity rows have varying length")
        return self.indices.reshape(-1, w)

    def transpose(self, num_targets):
        """Reverse incidence: for every target, the sorted list of sources."""
        sources = np.repeat(np.arange(len(self), dtype=np.int64), self.sizes())
        order = np.argsort(self.indices, kind="stable")
        counts = np.bincount(self.indices, minlength=num_targets)
        offsets = np.zeros(num_targets + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return Connectivity(offsets, sources[order])


class Mesh:
    """Simplex mesh of topological dimension ``tdim`` embedded in ``R^gdim``.

    Only vertex coordinates and cell-vertex connectivity are stored at
    construction; every other entity and incidence relation is computed
    on first request and cached.
    """

    def __init__(self, coordinates, cells, tdim, gdim=None):
        coordinates = np.asarray(coordinates, dtype=float)
        gdim = gdim if gdim is not None else (coordinates.shape[1] if coordinates.ndim == 2 else tdim)
        if not 1 <= tdim <= 3 or not tdim <= gdim <= 3:
            raise DimensionOutOfRange(f"invalid dimensions tdim={tdim}, gdim={gdim}")
        coordinates = coordinates.reshape(-1)
        if coordinates.size % gdim:
            raise ShapeMismatch("coordinate array length is not a multiple of gdim")
        cells = np.asarray(cells, dtype=np.int64).reshape(-1)
        nv = tdim + 1
        if cells.size % nv:
            raise ShapeMismatch(f"cell array length is not a multiple of {nv}")
        coords = coordinates.reshape(-1, gdim).copy()
        cells = cells.reshape(-1, nv)
        n0 = coords.shape[0]
        if cells.size and (cells.min() < 0 or cells.max() >= n0):
            raise IndexOutOfRange(f"cell references vertex outside 0..{n0 - 1}")
        if cells.size and np.any(np.sort(cells, axis=1)[:, 1:] == np.sort(cells, axis=1)[:, :-1]):
            raise ShapeMismatch("cell with repeated vertex")
        self._tdim = tdim
        self._gdim = gdim
        self._coordinates = coords
        self._topology = {(tdim, 0): Connectivity.from_array(cells)}
        self._num_entities = {0: n0, tdim: cells.shape[0]}
        self._lock = threading.RLock()

    # -- basic properties -------------------------------------------------
    @property
    def tdim(self):
        return self._tdim

    @property
    def gdim(self):
        return self._gdim

    @property
    def cell_name(self):
        return reference.TDIM_CELL[self._tdim]

    @property
    def coordinates(self):
        """Vertex coordinates, shape ``(n_0, gdim)``."""
        return self._coordinates

    @property
    def cells(self):
        """Cell-vertex table, shape ``(n_cells, tdim + 1)``."""
        return self._topology[(self._tdim, 0)].as_array()

    def num_vertices(self):
        return self._num_entities[0]

    def num_cells(self):
        return self._num_entities[self._tdim]

    def num_entities(self, d):
        self._check_dim(d)
        if d not in self._num_entities:
            self._create_entities(d)
        return self._num_entities[d]

    def connectivity_table(self):
        """Keys ``(d0, d1)`` of all connectivities computed so far."""
        return sorted(self._topology)

    def cell_coordinates(self, cells=None):
        """Vertex coordinates per cell, shape ``(n, tdim + 1, gdim)``."""
        table = self.cells if cells is None else self.cells[np.asarray(cells)]
        return self._coordinates[table]

    def hmin(self):
        from femkit.mesh.geometry import affine_maps
        return float(affine_maps(self.cell_coordinates())[3].min())

    def hmax(self):
        from femkit.mesh.geometry import affine_maps
        return float(affine_maps(self.cell_coordinates())[3].max())

    def copy(self):
        return Mesh(self._coordinates.copy(), self.cells.copy(), self._tdim, self._gdim)

    def __repr__(self):
        return (f"Mesh({self.cell_name}, gdim={self._gdim}, "
                f"vertices={self.num_vertices()}, cells={self.num_cells()})")

    # -- connectivity -----------------------------------------------------
    def _check_dim(self, d):
        if not 0 <= d <= self._tdim:
            raise DimensionOutOfRange(f"dimension {d} outside 0..{self._tdim}")

    def connectivity(self, d0, d1):
        """Incidence ``d0 -> d1``, computed and cached on first request."""
        self._check_dim(d0)
        self._check_dim(d1)
        conn = self._topology.get((d0, d1))
        if conn is not None:
            return conn
        with self._lock:
            if (d0, d1) not in self._topology:
                self._compute(d0, d1)
            return self._topology[(d0, d1)]

    def _compute(self, d0, d1):
        D = self._tdim
        if d0 > d1:
            if d0 == D or d1 == 0:
                self._create_entities(d1 if d0 == D else d0)
                if (d0, d1) in self._topology:
                    return
            # 0 < d1 < d0 < D: sub-entities through vertex keys
            self._create_entities(d0)
            self._create_entities(d1)
            ent_vertices = self._topology[(d0, 0)].as_array()
            lookup = self._entity_lookup(d1)
            local = reference.sub_entities(d0, d1)
            table = np.empty((ent_vertices.shape[0], len(local)), dtype=np.int64)
            for k, lv in enumerate(local):
                keys = ent_vertices[:, list(lv)]
                table[:, k] = [lookup[tuple(row)] for row in keys]
            self._topology[(d0, d1)] = Connectivity.from_array(table)
        elif d0 < d1:
            self._topology[(d0, d1)] = self.connectivity(d1, d0).transpose(self.num_entities(d0))
        else:
            via = D if d0 == 0 else 0
            down = self.connectivity(d0, via)
            up = self.connectivity(via, d0)
            rows = []
            for i in range(len(down)):
                nbrs = set()
                for j in down[i]:
                    nbrs.update(up[j].tolist())
                nbrs.discard(i)
                rows.append(sorted(nbrs))
            self._topology[(d0, d0)] = Connectivity.from_lists(rows)

    def _create_entities(self, d):
        """Number the dimension-``d`` entities; fills ``(D, d)`` and ``(d, 0)``."""
        D = self._tdim
        if d in (0, D) or d in self._num_entities:
            return
        cells = self.cells
        local = np.array(reference.sub_entities(D, d), dtype=np.int64)
        verts = cells[:, local]                      # (n_cells, n_sub, d+1)
        keys = np.sort(verts, axis=2).reshape(-1, d + 1)
        uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.reshape(-1)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        ids = rank[inverse].reshape(cells.shape[0], local.shape[0])
        self._topology[(D, d)] = Connectivity.from_array(ids)
        self._topology[(d, 0)] = Connectivity.from_array(uniq[order])
        self._num_entities[d] = len(order)

    def _entity_lookup(self, d):
        verts = self._topology[(d, 0)].as_array()
        return {tuple(row): i for i, row in enumerate(verts.tolist())}
