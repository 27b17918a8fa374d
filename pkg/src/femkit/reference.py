"""Reference simplices and their local sub-entity numbering.

Local numbering (shared by the mesh, elements and dofmaps):

* interval ``[0, 1]``: vertex ``k`` is facet ``k``.
* triangle ``(0,0), (1,0), (0,1)``: edge ``k`` is opposite vertex ``k``,
  i.e. edges ``(1,2), (0,2), (0,1)``.
* tetrahedron ``(0,0,0), (1,0,0), (0,1,0), (0,0,1)``: edges
  ``(2,3), (1,3), (1,2), (0,3), (0,2), (0,1)``; face ``k`` is opposite
  vertex ``k``.

Every sub-entity lists its local vertices in ascending order.
"""
from math import factorial

import numpy as np

from femkit.errors import UnsupportedFamily

CELL_NAMES = ("interval", "triangle", "tetrahedron")
CELL_TDIM = {"interval": 1, "triangle": 2, "tetrahedron": 3}
TDIM_CELL = {v: k for k, v in CELL_TDIM.items()}

_VERTICES = {
    1: np.array([[0.0], [1.0]]),
    2: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    3: np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
}

_SUB_ENTITIES = {
    1: {0: ((0,), (1,)), 1: ((0, 1),)},
    2: {0: ((0,), (1,), (2,)), 1: ((1, 2), (0, 2), (0, 1)), 2: ((0, 1, 2),)},
    3: {
        0: ((0,), (1,), (2,), (3,)),
        1: ((2, 3), (1, 3), (1, 2), (0, 3), (0, 2), (0, 1)),
        2: ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)),
        3: ((0, 1, 2, 3),),
    },
}


def cell_tdim(cell):
    if isinstance(cell, int):
        return cell
    try:
        return CELL_TDIM[cell]
    except KeyError:
        raise UnsupportedFamily(f"unknown cell shape {cell!r}") from None


def reference_vertices(tdim):
    return _VERTICES[tdim].copy()


def sub_entities(tdim, d):
    """Local vertex tuples of the dimension-``d`` sub-entities of the reference cell."""
    return _SUB_ENTITIES[tdim][d]


def num_sub_entities(tdim, d):
    return len(_SUB_ENTITIES[tdim][d])


def reference_volume(tdim):
    return 1.0 / factorial(tdim)


def barycentric(tdim, points):
    """Barycentric coordinates ``(lambda_0, ..., lambda_tdim)`` of reference points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lam = np.empty((points.shape[0], tdim + 1))
    lam[:, 1:] = points
    lam[:, 0] = 1.0 - points.sum(axis=1)
    return lam


def facet_opposite_vertex(tdim, facet):
    """The local cell vertex not contained in local facet ``facet``."""
    fv = set(_SUB_ENTITIES[tdim][tdim - 1][facet])
    (v,) = set(range(tdim + 1)) - fv
    return v
