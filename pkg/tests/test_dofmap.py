import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from femkit.dofmap import boundary_dofs, build_dofmap, cell_dofs, sparsity_pattern
from femkit.element import FiniteElement, MixedElement, VectorElement
from femkit.errors import IndexOutOfRange, ShapeMismatch
from femkit.mesh import MeshFunction, exterior_facets, refine, unit_cube, unit_interval, unit_square


def P(family, q, cell="triangle"):
    return FiniteElement(family, cell, q)


def test_cg1_square():
    assert build_dofmap(P("CG", 1), unit_square(2, 2)).global_dim == 9


def test_dg1_square():
    assert build_dofmap(P("DG", 1), unit_square(2, 2)).global_dim == 24


def test_cg2_entity_count():
    m = unit_square(1, 1)
    assert build_dofmap(P("CG", 2), m).global_dim == m.num_entities(0) + m.num_entities(1) == 9


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        build_dofmap(P("CG", 1, "tetrahedron"), unit_square(1, 1))


def test_cell_dofs_cg1_are_vertices():
    m = unit_square(2, 2)
    dm = build_dofmap(P("CG", 1), m)
    for c in range(m.num_cells()):
        # vertex numbering is the identity for CG1 (vertices numbered in mesh order)
        assert list(cell_dofs(dm, c)) == list(m.cells[c])
    with pytest.raises(IndexOutOfRange):
        cell_dofs(dm, 99)


def test_dg_cells_disjoint():
    dm = build_dofmap(P("DG", 1), unit_square(1, 1))
    assert not set(dm.cell_dofs(0)) & set(dm.cell_dofs(1))


ELEMENTS = [P("CG", q) for q in (1, 2, 3, 4)] + [P("DG", 0), P("DG", 2), P("CR", 1)] + [
    VectorElement("CG", "triangle", 2),
    MixedElement(VectorElement("CG", "triangle", 2), P("CG", 1)),
]


@pytest.mark.parametrize("element", ELEMENTS, ids=str)
def test_surjective_and_continuous(element):
    m = unit_square(3, 2)
    dm = build_dofmap(element, m)
    allv = np.unique(dm.cell_dofs_table)
    assert np.array_equal(allv, np.arange(dm.global_dim))
    # every global dof sits at one point: all cells agree on its coordinate
    coords = {}
    X = m.coordinates
    for c in range(m.num_cells()):
        V = X[m.cells[c]]
        pts = V[0] + element.dof_points @ (V[1:] - V[0])
        for i, g in enumerate(dm.cell_dofs(c)):
            if g in coords:
                assert np.allclose(coords[g], pts[i], atol=1e-12)
            coords[g] = pts[i]


@given(st.integers(1, 4), st.sampled_from([1, 2, 3]))
def test_cg_continuity_tets(n, q):
    m = unit_cube(n, 1, 1)
    el = P("CG", q, "tetrahedron")
    dm = build_dofmap(el, m)
    X = m.coordinates
    coords = {}
    for c in range(m.num_cells()):
        V = X[m.cells[c]]
        pts = V[0] + el.dof_points @ (V[1:] - V[0])
        for i, g in enumerate(dm.cell_dofs(c)):
            assert np.allclose(coords.setdefault(g, pts[i]), pts[i], atol=1e-12)
    assert len(coords) == dm.global_dim


def test_mixed_block_numbering():
    m = unit_square(2, 2)
    th = MixedElement(VectorElement("CG", "triangle", 2), P("CG", 1))
    dm = build_dofmap(th, m)
    assert dm.global_dim == 2 * 25 + 9
    u, p = dm.sub(0), dm.sub(1)
    assert (u.offset, u.size, p.offset, p.size) == (0, 50, 50, 9)
    assert dm.cell_dofs_table[:, 12:].min() == 50
    c = p.collapse()
    assert c.global_dim == 9 and c.cell_dofs_table.min() == 0


def test_boundary_dofs_cg1():
    m = unit_square(2, 2)
    dofs, X = boundary_dofs(build_dofmap(P("CG", 1), m), exterior_facets(m))
    assert len(dofs) == 8
    assert np.all((np.abs(X - 0.5) > 0.5 - 1e-12).any(axis=1))


def _left_edge(m):
    mf = MeshFunction(m, 1, dtype=bool)
    e2v = m.connectivity(1, 0).as_array()
    mf.values[:] = np.all(m.coordinates[e2v, 0] < 1e-12, axis=1)
    return mf


def test_boundary_dofs_cg2_closure():
    m = unit_square(1, 1)
    dofs, _ = boundary_dofs(build_dofmap(P("CG", 2), m), _left_edge(m))
    assert len(dofs) == 3


def test_boundary_dofs_dg1_geometric():
    m = unit_square(1, 1)
    dofs, X = boundary_dofs(build_dofmap(P("DG", 1), m), _left_edge(m))
    assert len(dofs) == 2
    assert np.allclose(X[:, 0], 0.0)


def test_boundary_dofs_empty():
    m = unit_square(1, 1)
    dofs, _ = boundary_dofs(build_dofmap(P("CG", 1), m), MeshFunction(m, 1, dtype=bool))
    assert len(dofs) == 0


def brute_pattern(dm_r, dm_c, facets=False):
    keys = set()
    for c in range(len(dm_r.cell_dofs_table)):
        keys |= {(i, j) for i in dm_r.cell_dofs(c) for j in dm_c.cell_dofs(c)}
    if facets:
        m = dm_r.mesh
        f2c = m.connectivity(1, 2)
        for f in range(m.num_entities(1)):
            cs = f2c[f]
            if len(cs) == 2:
                rows = np.concatenate([dm_r.cell_dofs(c) for c in cs])
                cols = np.concatenate([dm_c.cell_dofs(c) for c in cs])
                keys |= {(i, j) for i in rows for j in cols}
    return keys


def pattern_keys(p):
    return {(int(k) // p.shape[1], int(k) % p.shape[1]) for k in p.keys()}


def test_pattern_cg1_square():
    dm = build_dofmap(P("CG", 1), unit_square(1, 1))
    p = sparsity_pattern(dm, dm)
    assert pattern_keys(p) == brute_pattern(dm, dm)
    assert p.nnz == 14


def test_pattern_dg0():
    dm = build_dofmap(P("DG", 0), unit_square(1, 1))
    assert pattern_keys(sparsity_pattern(dm, dm)) == {(0, 0), (1, 1)}
    p = sparsity_pattern(dm, dm, has_interior_facet_terms=True)
    assert pattern_keys(p) == {(0, 0), (1, 1), (0, 1), (1, 0)}


@given(st.integers(1, 3), st.integers(1, 3), st.sampled_from(["CG1", "CG2", "DG1", "CR1"]),
       st.booleans())
def test_pattern_matches_brute_force(nx, ny, name, facets):
    m = unit_square(nx, ny)
    dm = build_dofmap(P(name[:2], int(name[2])), m)
    dm_c = build_dofmap(P("CG", 1), m)
    p = sparsity_pattern(dm, dm_c, has_interior_facet_terms=facets, diagonal=False)
    assert pattern_keys(p) == brute_pattern(dm, dm_c, facets)
    for i in range(p.shape[0]):
        row = p.row(i)
        assert np.all(np.diff(row) > 0)


def test_refined_mesh_dofmap():
    m0 = unit_square(2, 2)
    m = refine(m0, MeshFunction(m0, 2, [1, 0] * 4, dtype=bool))
    dm = build_dofmap(P("CG", 2), m)
    assert dm.global_dim == m.num_entities(0) + m.num_entities(1)


def test_interval_dg():
    dm = build_dofmap(P("DG", 2, "interval"), unit_interval(5))
    assert dm.global_dim == 15
