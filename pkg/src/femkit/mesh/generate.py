"""Unit interval / square / cube mesh generators."""
import itertools

import numpy as np

from femkit.errors import InvalidDivisions
from femkit.mesh.topology import Mesh


def _check(divisions):
    divisions = [int(n) for n in divisions]
    if any(n < 1 for n in divisions):
        raise InvalidDivisions(f"divisions must be >= 1, got {divisions}")
    return divisions


def unit_interval(n):
    (n,) = _check([n])
    x = np.linspace(0.0, 1.0, n + 1)
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x[:, None], cells, tdim=1, gdim=1)


def unit_square(nx, ny):
    """``2 nx ny`` triangles; each square split along its (i,j)-(i+1,j+1) diagonal."""
    nx, ny = _check([nx, ny])
    x, y = np.meshgrid(np.linspace(0, 1, nx + 1), np.linspace(0, 1, ny + 1))
    coords = np.column_stack([x.ravel(), y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    v0 = (j * (nx + 1) + i).ravel()
    v1, v2 = v0 + 1, v0 + nx + 1
    v3 = v2 + 1
    cells = np.empty((2 * v0.size, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v0, v1, v3])
    cells[1::2] = np.column_stack([v0, v2, v3])
    return Mesh(coords, cells, tdim=2, gdim=2)


def unit_cube(nx, ny, nz):
    """``6 nx ny nz`` tetrahedra (Kuhn split of each cube along its main diagonal)."""
    nx, ny, nz = _check([nx, ny, nz])
    z, y, x = np.meshgrid(np.linspace(0, 1, nz + 1), np.linspace(0, 1, ny + 1),
                          np.linspace(0, 1, nx + 1), indexing="ij")
    coords = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    stride = np.array([1, nx + 1, (nx + 1) * (ny + 1)])
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    base = (i * stride[0] + j * stride[1] + k * stride[2]).ravel()
    tets = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros(3, dtype=np.int64)
        path = [0]
        for axis in perm:
            corner[axis] = 1
            path.append(int(corner @ stride))
        tets.append(np.column_stack([base + p for p in path]))
    cells = np.stack(tets, axis=1).reshape(-1, 4)
    return Mesh(coords, np.sort(cells, axis=1), tdim=3, gdim=3)


def generate_unit_mesh(shape, divisions):
    if isinstance(divisions, int):
        divisions = [divisions]
    gens = {"interval": (unit_interval, 1), "square": (unit_square, 2), "cube": (unit_cube, 3)}
    try:
        gen, nd = gens[shape]
    except KeyError:
        raise ValueError(f"unknown shape {shape!r}; expected interval, square or cube") from None
    if len(divisions) != nd:
        raise InvalidDivisions(f"{shape} needs {nd} division counts, got {len(divisions)}")
    return gen(*divisions)
