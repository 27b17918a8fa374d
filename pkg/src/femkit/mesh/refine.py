"""Uniform and marked refinement, and Laplacian smoothing."""
import numpy as np

from femkit.errors import Unsupported, ShapeMismatch
from femkit.mesh.topology import Mesh


def refine(mesh, markers=None):
    """Return a refined copy of ``mesh``.

    Without markers every cell is split into ``2**tdim`` children. With a
    boolean cell ``MeshFunction`` the marked triangles are refined by
    longest-edge bisection, with the edge marks closed so that the result
    is conforming.
    """
    if markers is None:
        return _refine_uniform(mesh)
    if markers.dim != mesh.tdim:
        raise ShapeMismatch("refinement markers must live on cells")
    marked = np.asarray(markers.values, dtype=bool)
    if mesh.tdim == 3:
        raise Unsupported("marked refinement is only available for tdim <= 2")
    if not marked.any():
        return mesh.copy()
    if mesh.tdim == 1:
        return _bisect_intervals(mesh, marked)
    return _bisect_triangles(mesh, marked)


def _refine_uniform(mesh):
    D = mesh.tdim
    cells = mesh.cells
    X = mesh.coordinates
    if D == 1:
        return _bisect_intervals(mesh, np.ones(mesh.num_cells(), dtype=bool))
    edge_vertices = mesh.connectivity(1, 0).as_array()
    new_x = np.vstack([X, X[edge_vertices].mean(axis=1)])
    m = mesh.num_vertices() + mesh.connectivity(D, 1).as_array()
    if D == 2:
        v0, v1, v2 = cells.T
        m0, m1, m2 = m.T  # edge k is opposite vertex k
        children = np.stack([
            np.column_stack([v0, m2, m1]),
            np.column_stack([v1, m0, m2]),
            np.column_stack([v2, m1, m0]),
            np.column_stack([m0, m1, m2]),
        ], axis=1).reshape(-1, 3)
        return Mesh(new_x, children, 2, mesh.gdim)
    v0, v1, v2, v3 = cells.T
    m23, m13, m12, m03, m02, m01 = m.T
    corners = [
        np.column_stack([v0, m01, m02, m03]),
        np.column_stack([m01, v1, m12, m13]),
        np.column_stack([m02, m12, v2, m23]),
        np.column_stack([m03, m13, m23, v3]),
    ]
    # interior octahedron, split along its shortest diagonal
    diagonals = [(m01, m23), (m02, m13), (m03, m12)]
    lengths = np.stack([np.linalg.norm(new_x[a] - new_x[b], axis=1) for a, b in diagonals], axis=1)
    choice = np.argmin(lengths, axis=1)
    inner = np.empty((len(cells), 4, 4), dtype=np.int64)
    for c in range(3):
        sel = choice == c
        a, b = diagonals[c]
        (p1, p2), (r1, r2) = [diagonals[k] for k in range(3) if k != c]
        ring = [p1, r1, p2, r2]
        for t in range(4):
            inner[sel, t] = np.column_stack([a, b, ring[t], ring[(t + 1) % 4]])[sel]
    children = np.concatenate([np.stack(corners, axis=1), inner], axis=1).reshape(-1, 4)
    return Mesh(new_x, children, 3, mesh.gdim)


def _bisect_intervals(mesh, marked):
    X = mesh.coordinates
    cells = mesh.cells
    idx = np.nonzero(marked)[0]
    mids = mesh.num_vertices() + np.arange(len(idx))
    new_x = np.vstack([X, X[cells[idx]].mean(axis=1)])
    keep = cells[~marked]
    split = np.stack([np.column_stack([cells[idx, 0], mids]),
                      np.column_stack([mids, cells[idx, 1]])], axis=1).reshape(-1, 2)
    out = np.empty((mesh.num_cells() + len(idx), 2), dtype=np.int64)
    # children replace their parent in place to keep cell order stable
    pos = np.cumsum(np.where(marked, 2, 1)) - np.where(marked, 2, 1)
    out[pos[~marked]] = keep
    out[pos[idx]] = split[0::2]
    out[pos[idx] + 1] = split[1::2]
    return Mesh(new_x, out, 1, mesh.gdim)


def _longest_local_edge(mesh):
    edge_vertices = mesh.connectivity(1, 0).as_array()
    X = mesh.coordinates
    length = np.linalg.norm(X[edge_vertices[:, 0]] - X[edge_vertices[:, 1]], axis=1)
    c2e = mesh.connectivity(2, 1).as_array()
    L = length[c2e]
    # ties broken by the smaller global edge index
    best = np.empty(len(c2e), dtype=np.int64)
    for c in range(len(c2e)):
        order = sorted(range(3), key=lambda k: (-L[c, k], c2e[c, k]))
        best[c] = order[0]
    return best, c2e


def _bisect_triangles(mesh, marked):
    longest, c2e = _longest_local_edge(mesh)
    le_global = c2e[np.arange(len(c2e)), longest]
    edge_marked = np.zeros(mesh.num_entities(1), dtype=bool)
    edge_marked[le_global[marked]] = True
    # closure: any cell with a marked edge must also bisect its longest edge
    while True:
        touched = edge_marked[c2e].any(axis=1)
        missing = touched & ~edge_marked[le_global]
        if not missing.any():
            break
        edge_marked[le_global[missing]] = True

    X = mesh.coordinates
    edge_vertices = mesh.connectivity(1, 0).as_array()
    new_ids = -np.ones(len(edge_marked), dtype=np.int64)
    marked_edges = np.nonzero(edge_marked)[0]
    new_ids[marked_edges] = mesh.num_vertices() + np.arange(len(marked_edges))
    new_x = np.vstack([X, X[edge_vertices[marked_edges]].mean(axis=1)])

    out = []
    for c, cell in enumerate(mesh.cells):
        e = c2e[c]
        if not edge_marked[e].any():
            out.append(tuple(cell))
            continue
        k = longest[c]
        a_loc, b_loc = [i for i in range(3) if i != k]
        a, b, cv = cell[a_loc], cell[b_loc], cell[k]
        m = new_ids[e[k]]
        m_ac = new_ids[e[b_loc]]  # edge (a, c) is opposite b
        m_bc = new_ids[e[a_loc]]  # edge (b, c) is opposite a
        if m_ac >= 0:
            out += [(a, m, m_ac), (m_ac, m, cv)]
        else:
            out.append((a, m, cv))
        if m_bc >= 0:
            out += [(m, b, m_bc), (m, m_bc, cv)]
        else:
            out.append((m, b, cv))
    return Mesh(new_x, np.array(out, dtype=np.int64), 2, mesh.gdim)


def _signed_volume_factor(P):
    """Signed ``det J`` for same-dimension simplices, positive volume otherwise."""
    J = np.swapaxes(P[:, 1:, :] - P[:, :1, :], 1, 2)
    if J.shape[1] == J.shape[2]:
        return np.linalg.det(J)
    return np.sqrt(np.abs(np.linalg.det(np.einsum("nki,nkj->nij", J, J))))


def smooth(mesh, iterations=1, history=None):
    """Laplacian smoothing of interior vertices, in place; returns ``mesh``.

    Vertices are visited in index order (Gauss-Seidel); a move that would
    invert or collapse an incident cell is skipped. If ``history`` is a
    list, the largest vertex displacement of each sweep is appended to it.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    from femkit.mesh import exterior_facets

    D = mesh.tdim
    X = mesh.coordinates
    on_boundary = np.zeros(mesh.num_vertices(), dtype=bool)
    ext = exterior_facets(mesh).values
    fv = mesh.connectivity(D - 1, 0)
    for f in np.nonzero(ext)[0]:
        on_boundary[fv[f]] = True
    nbrs = mesh.connectivity(0, 0)
    v2c = mesh.connectivity(0, D)
    cells = mesh.cells
    interior = np.nonzero(~on_boundary)[0]
    for _ in range(iterations):
        moved = 0.0
        for v in interior:
            target = X[nbrs[v]].mean(axis=0)
            inc = cells[v2c[v]]
            before = _signed_volume_factor(X[inc])
            old = X[v].copy()
            X[v] = target
            after = _signed_volume_factor(X[inc])
            scale = np.abs(before).max()
            if np.any(np.sign(after) != np.sign(before)) or np.any(np.abs(after) <= 1e-14 * scale):
                X[v] = old
                continue
            moved = max(moved, float(np.linalg.norm(target - old)))
        if history is not None:
            history.append(moved)
    return mesh
