"""Affine cell maps, cell sizes and facet normals."""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from femkit import reference
from femkit.errors import DegenerateCell, IndexOutOfRange

DEGENERACY_TOL = 1e-14


@dataclass(frozen=True)
class CellGeometry:
    jacobian: np.ndarray   # (gdim, tdim), x = x0 + J xi
    detJ: float            # signed when gdim == tdim, else the volume factor
    Jinv: np.ndarray       # (tdim, gdim), (pseudo-)inverse of J
    h: float               # cell diameter
    volume: float


def affine_maps(coords, check=True):
    """Vectorised affine maps of simplices.

    Parameters
    ----------
    coords : array, shape (n, tdim + 1, gdim)
        Vertex coordinates of each cell.

    Returns
    -------
    J : (n, gdim, tdim), detJ : (n,), K : (n, tdim, gdim), h : (n,)
    """
    coords = np.asarray(coords, dtype=float)
    J = np.swapaxes(coords[:, 1:, :] - coords[:, :1, :], 1, 2)
    n, gdim, tdim = J.shape
    if gdim == tdim:
        detJ = np.linalg.det(J)
    else:
        detJ = np.sqrt(np.linalg.det(np.einsum("nki,nkj->nij", J, J)))
    diff = coords[:, :, None, :] - coords[:, None, :, :]
    h = np.sqrt((diff ** 2).sum(axis=3)).max(axis=(1, 2))
    if check:
        bad = np.abs(detJ) <= DEGENERACY_TOL * h ** tdim
        if np.any(bad):
            raise DegenerateCell(f"{int(bad.sum())} degenerate cell(s), first at batch "
                                 f"position {int(np.argmax(bad))}")
    if gdim == tdim:
        K = np.linalg.inv(J)
    else:
        K = np.linalg.pinv(J)
    return J, detJ, K, h


def cell_geometry(mesh, cell):
    if not 0 <= cell < mesh.num_cells():
        raise IndexOutOfRange(f"cell {cell} out of range")
    J, detJ, K, h = affine_maps(mesh.cell_coordinates([cell]))
    vol = abs(detJ[0]) / factorial(mesh.tdim)
    return CellGeometry(J[0], float(detJ[0]), K[0], float(h[0]), float(vol))


def cell_volumes(mesh):
    _, detJ, _, _ = affine_maps(mesh.cell_coordinates())
    return np.abs(detJ) / factorial(mesh.tdim)


def outward_normals(K, local_facets, tdim):
    """Unit outward normals of local facets, from inverse Jacobians ``K``.

    The normal of facet ``f`` is minus the normalised physical gradient of
    the barycentric coordinate of the vertex opposite ``f``.
    """
    local_facets = np.asarray(local_facets)
    opp = np.array([reference.facet_opposite_vertex(tdim, f) for f in range(tdim + 1)])[local_facets]
    grad_ref = np.zeros((len(local_facets), tdim))
    zero = opp == 0
    grad_ref[zero] = -1.0
    idx = np.nonzero(~zero)[0]
    grad_ref[idx, opp[idx] - 1] = 1.0
    g = np.einsum("nk,nkj->nj", grad_ref, K)
    return -g / np.linalg.norm(g, axis=1, keepdims=True)


def facet_measure(facet_coords):
    """Measure of facets given their vertex coordinates ``(n, d + 1, gdim)``."""
    facet_coords = np.asarray(facet_coords, dtype=float)
    d = facet_coords.shape[1] - 1
    if d == 0:
        return np.ones(facet_coords.shape[0])
    E = facet_coords[:, 1:, :] - facet_coords[:, :1, :]
    G = np.einsum("nik,njk->nij", E, E)
    return np.sqrt(np.abs(np.linalg.det(G))) / factorial(d)


def facet_geometry(mesh, facet):
    """Unit normal (outward from the '+' cell) and measure of a facet.

    The '+' cell is the incident cell with the smaller index.
    """
    D = mesh.tdim
    if not 0 <= facet < mesh.num_entities(D - 1):
        raise IndexOutOfRange(f"facet {facet} out of range")
    cells = mesh.connectivity(D - 1, D)[facet]
    plus = int(cells.min())
    local = int(np.nonzero(mesh.connectivity(D, D - 1)[plus] == facet)[0][0])
    _, _, K, _ = affine_maps(mesh.cell_coordinates([plus]))
    n = outward_normals(K, [local], D)[0]
    verts = mesh.connectivity(D - 1, 0)[facet]
    area = facet_measure(mesh.coordinates[verts][None])[0]
    return n, float(area)
