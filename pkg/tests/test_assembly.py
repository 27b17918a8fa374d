
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from harness import as_dense, demo_forms, dense_assembly
from femkit.assembly import (DirichletBC, DomainBoundary, VariationalProblem, apply_bc, assemble,
                             assemble_system, bc_dofs, compute_norm, errornorm, near)
from femkit.element import FiniteElement, MixedElement, VectorElement
from femkit.errors import (EmptyBoundary, MeshMismatch, NewtonNoConvergence, UnboundCoefficient,
                           UnsupportedKind)
from femkit.form import (Argument, Coefficient, Constant, FacetNormal, dot, ds, dx,
                         grad, parse_form_file)
from femkit.function import Expression, Function, FunctionSpace, interpolate
from femkit.la import solve_linear
from femkit.mesh import Mesh, MeshFunction, refine, unit_cube, unit_interval, unit_square

P1 = FiniteElement("CG", "triangle", 1)


def cg(mesh, q=1):
    return FunctionSpace(mesh, "CG", q)


def small_meshes():
    """Every 2D mesh used by the global oracle (all with at most 8 cells)."""
    base = unit_square(1, 1)
    return [unit_square(1, 1), unit_square(2, 1), unit_square(2, 2),
            refine(base, MeshFunction(base, 2, [True, False], dtype=bool))]


# ---------------------------------------------------------------- basic assembly
def test_area():
    mesh = unit_square(3, 3)
    assert assemble(Constant(1.0) * dx, mesh=mesh) == pytest.approx(1.0, abs=1e-14)


def test_partition_of_unity_vector():
    V = cg(unit_square(4, 3))
    b = assemble(Argument(0, V) * dx)
    assert b.array.sum() == pytest.approx(1.0, abs=1e-14)


def test_reaction_diffusion_size_and_symmetry():
    V = cg(unit_square(32, 32))
    v, u = Argument(0, V), Argument(1, V)
    A = assemble(dot(grad(v), grad(u)) * dx + v * u * dx)
    assert A.shape == (1089, 1089)
    D = A.to_dense()
    assert np.max(np.abs(D - D.T)) <= 1e-14


def test_boundary_length_and_volumes():
    assert assemble(Constant(1.0) * ds, mesh=unit_square(3, 2)) == pytest.approx(4.0, abs=1e-13)
    assert assemble(Constant(1.0) * dx, mesh=unit_cube(2, 1, 2)) == pytest.approx(1.0, abs=1e-14)
    assert assemble(Constant(1.0) * ds, mesh=unit_cube(1, 2, 1)) == pytest.approx(6.0, abs=1e-13)
    assert assemble(Constant(1.0) * ds, mesh=unit_interval(5)) == pytest.approx(2.0, abs=1e-14)


def test_lift_functional_closed_surface(demos_dir):
    with open(f"{demos_dir}/lift.ufl") as fh:
        M = parse_form_file(fh.read()).forms["M"]
    mesh = unit_square(4, 4)
    p = M.coefficients()[0]
    one = interpolate(Expression("1.0"), cg(mesh))
    assert abs(assemble(M, coefficients={p: one})) <= 1e-14
    # p = y gives the area by the divergence theorem: int y n_y ds = int 1 dx
    y = interpolate(Expression("x[1]"), cg(mesh))
    assert assemble(M, coefficients={p: y}) == pytest.approx(1.0, abs=1e-13)


def test_unbound_coefficient():
    mesh = unit_square(2, 2)
    with pytest.raises(UnboundCoefficient):
        assemble(Coefficient(P1) * dx, mesh=mesh)


def test_mesh_mismatch():
    V1, V2 = cg(unit_square(2, 2)), cg(unit_square(2, 2))
    with pytest.raises(MeshMismatch):
        assemble(Argument(0, V1) * Function(V2) * dx)


def test_subdomain_cell_markers():
    mesh = unit_square(2, 2)
    mf = MeshFunction(mesh, 2, dtype=int)
    mf.values[:] = (mesh.cell_coordinates().mean(axis=1)[:, 0] < 0.5).astype(int)
    area = assemble(Constant(1.0) * dx(1), mesh=mesh, cell_markers=mf)
    assert area == pytest.approx(0.5, abs=1e-14)


# ---------------------------------------------------------------- global oracle
DEMOS = demo_forms()


@pytest.mark.parametrize("entry", DEMOS, ids=[f"{f}:{n}" for f, n, _ in DEMOS])
def test_global_assembly_matches_dense_sum(entry):
    form = entry[2]
    rng = np.random.default_rng(7)
    for mesh in small_meshes():
        coefs = {}
        for c in form.coefficients():
            f = Function(FunctionSpace(mesh, c.element))
            f.array[:] = rng.normal(size=f.array.size)
            coefs[c] = f
        G = as_dense(assemble(form, coefficients=coefs, mesh=mesh))
        B = dense_assembly(form, mesh, coefs)
        assert np.max(np.abs(G - B)) <= 1e-12 * max(1.0, np.max(np.abs(B)))


def test_interval_and_cube_dense_sum():
    for mesh, cell in ((unit_interval(6), "interval"), (unit_cube(1, 1, 1), "tetrahedron")):
        el = FiniteElement("DG", cell, 1)
        v, u = Argument(0, el), Argument(1, el)
        n = FacetNormal(mesh.tdim)
        from femkit.form import avg, dS, jump
        a = (dot(grad(v), grad(u)) * dx + dot(jump(v, n), jump(u, n)) * dS
             - dot(avg(grad(v)), jump(u, n)) * dS + v * u * ds)
        G = assemble(a, mesh=mesh).to_dense()
        assert np.max(np.abs(G - dense_assembly(a, mesh, {}))) <= 1e-12


# ---------------------------------------------------------------- boundary conditions
def test_domain_boundary_dofs():
    V = cg(unit_square(2, 2))
    dofs, vals = bc_dofs(DirichletBC(V, 0.0, DomainBoundary()))
    assert len(dofs) == 8 and not vals.any()


def test_left_edge_cg2():
    V = cg(unit_square(1, 1), 2)
    dofs, _ = bc_dofs(DirichletBC(V, 1.0, lambda x: near(x[0], 0.0)))
    assert len(dofs) == 3


def test_taylor_hood_velocity_only():
    mesh = unit_square(2, 2)
    W = FunctionSpace(mesh, MixedElement(VectorElement("CG", "triangle", 2), P1))
    bc = DirichletBC(W.sub(0), (1.0, 2.0), "on_boundary")
    dofs, vals = bc_dofs(bc)
    offset = W.sub(1).dofmap.offset
    assert dofs.max() < offset
    assert len(dofs) == 2 * 16
    comps = W.dofmap.dof_components()[dofs]
    assert np.array_equal(vals, np.where(comps == 0, 1.0, 2.0))


def test_bc_from_marked_facets():
    mesh = unit_square(2, 2)
    mf = MeshFunction(mesh, 1, dtype=int)
    e2v = mesh.connectivity(1, 0).as_array()
    mf.values[np.all(mesh.coordinates[e2v, 1] > 1 - 1e-12, axis=1)] = 3
    dofs, _ = bc_dofs(DirichletBC(cg(mesh), 0.0, mf, marker=3))
    assert len(dofs) == 3


def test_empty_boundary_warns():
    V = cg(unit_square(2, 2))
    with pytest.warns(EmptyBoundary):
        bc_dofs(DirichletBC(V, 0.0, lambda x: x[0] > 5))


def test_pointwise_bc():
    V = cg(unit_square(2, 2))
    dofs, _ = bc_dofs(DirichletBC(V, 0.0, lambda x: near(x[0], 0.5) and near(x[1], 0.5),
                                  method="pointwise"))
    assert len(dofs) == 1


def _poisson(n=6, g=0.0, q=1):
    V = cg(unit_square(n, n), q)
    v, u = Argument(0, V), Argument(1, V)
    f = Expression("1 + x[0]*x[1]")
    return V, dot(grad(v), grad(u)) * dx, f * v * dx, DirichletBC(V, g, DomainBoundary())


def test_apply_bc_unit_rows_and_idempotence():
    V, a, L, bc = _poisson(g=0.5)
    A, b = assemble(a), assemble(L)
    apply_bc(bc, A, b)
    first = A.to_dense(), b.array.copy()
    apply_bc(bc, A, b)
    assert np.array_equal(A.to_dense(), first[0]) and np.array_equal(b.array, first[1])
    dofs, vals = bc_dofs(bc)
    x, _ = solve_linear(A, b, method="lu")
    assert np.max(np.abs(x[dofs] - vals)) <= 1e-15
    x, _ = solve_linear(A, b, method="bicgstab", rtol=1e-13)
    assert np.max(np.abs(x[dofs] - vals)) <= 1e-12


def test_apply_bc_newton_mode_zeroes_residual():
    V, a, L, bc = _poisson()
    b = assemble(L)
    apply_bc(DirichletBC(V, 0.0, DomainBoundary()), b=b, x=np.zeros(V.dim()))
    dofs, _ = bc_dofs(bc)
    assert not b.array[dofs].any()


def test_assemble_system_symmetric_and_path_equivalent():
    V, a, L, bc = _poisson(n=8, g=0.25)
    A, b = assemble_system(a, L, [bc])
    D = A.to_dense()
    assert np.max(np.abs(D - D.T)) <= 1e-14
    x1, _ = solve_linear(A, b, method="cg", rtol=1e-13)
    A2, b2 = assemble(a), assemble(L)
    apply_bc(bc, A2, b2)
    x2, _ = solve_linear(A2, b2, method="bicgstab", rtol=1e-13)
    assert np.max(np.abs(x1 - x2)) <= 1e-10
    dofs, vals = bc_dofs(bc)
    assert np.max(np.abs(x1[dofs] - vals)) <= 1e-12


def test_assemble_system_without_bcs_matches_assemble():
    V, a, L, _ = _poisson()
    A, b = assemble_system(a, L, [])
    assert np.array_equal(A.to_dense(), assemble(a).to_dense())
    assert np.array_equal(b.array, assemble(L).array)


def test_zero_problem_gives_zero():
    V, a, _, bc = _poisson()
    v = Argument(0, V)
    u = VariationalProblem(a, Constant(0.0) * v * dx, [bc]).solve()
    assert not u.array.any()


def test_reaction_diffusion_residual(demos_dir):
    with open(f"{demos_dir}/reaction_diffusion.ufl") as fh:
        parsed = parse_form_file(fh.read())
    mesh = unit_square(32, 32)
    coefs = {"f": "sin(x[0])*cos(x[1])"}
    prob = VariationalProblem(parsed.forms["a"], parsed.forms["L"], coefficients=coefs,
                              mesh=mesh)
    u = prob.solve()
    A = assemble(parsed.forms["a"], coefficients=coefs, mesh=mesh)
    b = assemble(parsed.forms["L"], coefficients=coefs, mesh=mesh)
    assert np.linalg.norm(A @ u.array - b.array) <= 1e-10 * b.norm()


def test_projection_via_variational_problem():
    V = cg(unit_square(4, 4), 2)
    v, u = Argument(0, V), Argument(1, V)
    f = Expression("x[0]*x[0] + x[1]")
    uh = VariationalProblem(v * u * dx, v * f * dx).solve()
    assert errornorm(uh, f) <= 1e-10


# ---------------------------------------------------------------- Newton
def _nonlinear(demos_dir, n=16):
    with open(f"{demos_dir}/nonlinear_poisson.ufl") as fh:
        parsed = parse_form_file(fh.read())
    V = cg(unit_square(n, n))
    u_ph = parsed.coefficients["u"]
    u = Function(V)
    F = parsed.forms["L"]
    J = parsed.forms["a"]
    coefs = {u_ph: u, "f": "x[0]*sin(x[1])"}
    bc = DirichletBC(V, 0.0, DomainBoundary())
    return VariationalProblem(J, F, [bc], nonlinear=True, u=u, coefficients=coefs), u


def test_newton_nonlinear_poisson(demos_dir):
    prob, u = _nonlinear(demos_dir)
    prob.solve()
    assert prob.iterations <= 8
    assert prob.residuals[-1] <= 1e-10
    r = prob.residuals
    # quadratic tail: each reduction at least squares the previous relative residual
    rel = [x / r[0] for x in r]
    assert rel[-1] <= 10 * rel[-2] ** 2


def test_newton_auto_jacobian_matches_supplied(demos_dir):
    prob, u = _nonlinear(demos_dir, n=8)
    prob.solve()
    prob2, u2 = _nonlinear(demos_dir, n=8)
    prob2.a = None
    prob2.solve()
    assert np.allclose(u.array, u2.array, atol=1e-12)
    assert prob.iterations == prob2.iterations


def test_newton_linear_problem_one_iteration():
    V = cg(unit_square(6, 6))
    v = Argument(0, V)
    u = Function(V)
    F = dot(grad(v), grad(u)) * dx - v * Expression("1 + x[0]") * dx
    prob = VariationalProblem(None, F, [DirichletBC(V, 0.2, DomainBoundary())], nonlinear=True,
                              u=u)
    prob.solve()
    assert prob.iterations == 1


def test_newton_zero_data(demos_dir):
    prob, u = _nonlinear(demos_dir, n=6)
    prob.coefficients["f"] = "0.0"
    prob.solve()
    assert prob.iterations <= 1
    assert not u.array.any()


def test_newton_no_convergence(demos_dir):
    prob, u = _nonlinear(demos_dir, n=6)
    prob.newton_maxit = 1
    prob.newton_atol = 0.0
    prob.newton_rtol = 1e-30
    with pytest.raises(NewtonNoConvergence):
        prob.solve()


# ---------------------------------------------------------------- norms
def test_norm_of_constant():
    V = cg(unit_square(3, 3))
    assert compute_norm(interpolate(Expression("1.0"), V)) == pytest.approx(1.0, abs=1e-14)


def test_norm_of_x_in_cg2():
    V = cg(unit_square(4, 4), 2)
    u = interpolate(Expression("x[0]"), V)
    assert compute_norm(u, "L2") == pytest.approx(1 / np.sqrt(3), abs=1e-14)
    assert compute_norm(u, "H10") == pytest.approx(1.0, abs=1e-13)
    assert compute_norm(u, "H1") == pytest.approx(np.sqrt(4 / 3), abs=1e-13)


def test_errornorm_of_self():
    V = cg(unit_square(3, 3), 2)
    u = interpolate(Expression("sin(x[0])*x[1]"), V)
    for kind in ("L2", "H1", "H10"):
        assert errornorm(u, u, kind) <= 1e-12


def test_unsupported_norm():
    u = Function(cg(unit_square(1, 1)))
    with pytest.raises(UnsupportedKind):
        compute_norm(u, "Hdiv")


# ---------------------------------------------------------------- cell-order independence
@given(st.integers(0, 2 ** 31))
def test_cell_order_independence(seed):
    rng = np.random.default_rng(seed)
    base = unit_square(3, 2)
    perm = rng.permutation(base.num_cells())
    shuffled = Mesh(base.coordinates.copy(), base.cells[perm], base.tdim, base.gdim)
    f = Expression("1 + x[0]*x[0]")
    mats = []
    for mesh in (base, shuffled):
        V = cg(mesh)
        v, u = Argument(0, V), Argument(1, V)
        mats.append(assemble(f * dot(grad(v), grad(u)) * dx + v * u * ds).to_dense())
    # CG1 numbers dofs by vertex, so the numbering is fixed under cell permutation
    assert np.max(np.abs(mats[0] - mats[1])) <= 1e-14


@given(st.integers(0, 2 ** 31))
def test_cell_order_cg2_up_to_renumbering(seed):
    rng = np.random.default_rng(seed)
    base = unit_square(2, 2)
    perm = rng.permutation(base.num_cells())
    shuffled = Mesh(base.coordinates.copy(), base.cells[perm], base.tdim, base.gdim)
    out = []
    for mesh in (base, shuffled):
        V = cg(mesh, 2)
        v, u = Argument(0, V), Argument(1, V)
        A = assemble(dot(grad(v), grad(u)) * dx).to_dense()
        order = np.lexsort(V.tabulate_dof_coordinates().T)
        out.append(A[np.ix_(order, order)])
    assert np.max(np.abs(out[0] - out[1])) <= 1e-14
