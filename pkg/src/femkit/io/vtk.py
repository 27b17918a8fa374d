"""Legacy ASCII VTK output (UNSTRUCTURED_GRID with POINT_DATA)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from femkit import reference
from femkit.errors import IoError, ShapeMismatch
from femkit.function import Function, split_mixed

VTK_CELL_TYPES = {1: 3, 2: 5, 3: 10}   # line, triangle, tetrahedron


def vertex_values(f: Function) -> np.ndarray:
    """Values of ``f`` at mesh vertices, ``(num_vertices, value_size)``.

    Evaluated cell by cell at the reference vertices; for discontinuous
    functions the value from the highest-numbered incident cell is kept.
    """
    V = f.function_space
    mesh = V.mesh
    ref = reference.reference_vertices(mesh.tdim)
    phi = V.element.tabulate(ref)                               # (nv, n, vs)
    w = f.array[V.dofmap.cell_dofs_table]                       # (C, n)
    vals = np.einsum("cn,pnv->cpv", w, phi)                     # (C, nv, vs)
    out = np.zeros((mesh.num_vertices(), V.element.value_size))
    out[mesh.cells.reshape(-1)] = vals.reshape(-1, V.element.value_size)
    return out


def _flatten(functions):
    out = []
    for i, f in enumerate(functions):
        name = f.name if f.name else f"f{i}"
        if f.function_space.element.is_compound() and f.function_space.element.family == "Mixed":
            for j, g in enumerate(split_mixed(f)):
                g.name = f"{name}_{j}"
                out.extend(_flatten([g]))
        else:
            out.append((name, f))
    return out


def vtk_text(mesh, functions=(), title="femkit output") -> str:
    """Legacy VTK document for ``mesh`` and vertex values of ``functions``."""
    items = _flatten(functions)
    notes = []
    for name, f in items:
        if f.function_space.mesh is not mesh:
            raise ShapeMismatch(f"function {name} lives on another mesh")
        el = f.function_space.element
        d = el.descriptor
        scalar = d.sub[0] if d.family == "Vector" else d
        if not (scalar.family == "CG" and scalar.degree == 1):
            notes.append(f"{name}: {el} interpolated to vertices")
    header = "; ".join([title] + notes).replace("\n", " ")[:255]
    X = np.zeros((mesh.num_vertices(), 3))
    X[:, :mesh.gdim] = mesh.coordinates
    nv = mesh.tdim + 1
    lines = ["# vtk DataFile Version 3.0", header, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(X)} double"]
    lines += [" ".join(format(c, ".17g") for c in x) for x in X]
    lines.append(f"CELLS {mesh.num_cells()} {mesh.num_cells() * (nv + 1)}")
    lines += [f"{nv} " + " ".join(str(int(v)) for v in c) for c in mesh.cells]
    lines.append(f"CELL_TYPES {mesh.num_cells()}")
    lines += [str(VTK_CELL_TYPES[mesh.tdim])] * mesh.num_cells()
    if items:
        lines.append(f"POINT_DATA {len(X)}")
    for name, f in items:
        vals = vertex_values(f)
        safe = "".join(ch if ch.isalnum() or ch in "_-" else "_" for ch in name)
        if vals.shape[1] == 1:
            lines += [f"SCALARS {safe} double 1", "LOOKUP_TABLE default"]
            lines += [format(v, ".17g") for v in vals[:, 0]]
        elif vals.shape[1] <= 3:
            V3 = np.zeros((len(vals), 3))
            V3[:, :vals.shape[1]] = vals
            lines.append(f"VECTORS {safe} double")
            lines += [" ".join(format(c, ".17g") for c in v) for v in V3]
        else:
            lines.append(f"FIELD {safe}_data 1")
            lines.append(f"{safe} {vals.shape[1]} {len(vals)} double")
            lines += [" ".join(format(c, ".17g") for c in v) for v in vals]
    return "\n".join(lines) + "\n"


def write_vtk(path, mesh, *functions, title="femkit output"):
    text = vtk_text(mesh, functions, title)
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


__all__ = ["VTK_CELL_TYPES", "vertex_values", "vtk_text", "write_vtk"]
