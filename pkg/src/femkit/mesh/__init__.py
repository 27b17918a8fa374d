"""Dimension-independent simplex meshes."""
import numpy as np

from femkit.errors import NonManifold
from femkit.mesh.entities import (Cell, Edge, Face, Facet, MeshEntity, MeshFunction, Vertex,
                                  cells, edges, entities, faces, facets, vertices)
from femkit.mesh.generate import generate_unit_mesh, unit_cube, unit_interval, unit_square
from femkit.mesh.geometry import (CellGeometry, affine_maps, cell_geometry, cell_volumes,
                                  facet_geometry)
from femkit.mesh.refine import refine, smooth
from femkit.mesh.topology import Connectivity, Mesh


def build_mesh(coordinates, cells, tdim, gdim):
    return Mesh(coordinates, cells, tdim, gdim)


def exterior_facets(mesh):
    """Boolean facet function, true on facets with exactly one incident cell."""
    counts = mesh.connectivity(mesh.tdim - 1, mesh.tdim).sizes()
    if np.any(counts > 2):
        raise NonManifold(f"{int((counts > 2).sum())} facet(s) with more than two cells")
    return MeshFunction(mesh, mesh.tdim - 1, counts == 1, dtype=bool)


UnitInterval = unit_interval
UnitSquare = unit_square
UnitCube = unit_cube

__all__ = [
    "Cell", "CellGeometry", "Connectivity", "Edge", "Face", "Facet", "Mesh", "MeshEntity",
    "MeshFunction", "UnitCube", "UnitInterval", "UnitSquare", "Vertex", "affine_maps",
    "build_mesh", "cell_geometry", "cell_volumes", "cells", "edges", "entities",
    "exterior_facets", "facet_geometry", "faces", "facets", "generate_unit_mesh", "refine",
    "smooth", "unit_cube", "unit_interval", "unit_square", "vertices",
]
