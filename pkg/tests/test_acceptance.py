"""Acceptance gate: one test per criterion, each at its stated tolerance.

A summary with one PASS/FAIL line per criterion is printed at the end of
the pytest run (see ``pytest_terminal_summary`` in conftest.py). The file
can also be run directly: ``python3 tests/test_acceptance.py``.
"""
import itertools
import json
import os
import sys

import numpy as np
import pytest
import scipy.sparse.linalg

import oracle
from harness import (as_dense, conforming, demo_forms, dense_assembly, euler,
                     kernel_oracle_error)
from vtkcheck import check_vtk
from femkit.assembly import (DirichletBC, DomainBoundary, VariationalProblem, apply_bc, assemble,
                             assemble_system)
from femkit.cli import main as cli_main
from femkit.compiler import (REFERENCE_P1_MASS, REFERENCE_P1_STIFFNESS, compile_form,
                             quadrature_rule, tabulate_tensor)
from femkit.element import FiniteElement
from femkit.form import (Argument, FacetNormal, avg, dS, derivative, dot, ds, dx, grad, jump,
                         parse_form_file)
from femkit.function import Expression, Function, FunctionSpace, TestFunction, TrialFunction
from femkit.io import read_mesh_xml, write_mesh_xml
from femkit.la import solve_linear
from femkit.mesh import MeshFunction, cell_volumes, refine, unit_cube, unit_interval, unit_square

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "scripts"))
import convergence  # noqa: E402

DEMOS = os.path.join(os.path.dirname(__file__), "..", "src", "femkit", "demos")


def demo(name):
    with open(os.path.join(DEMOS, name)) as fh:
        return parse_form_file(fh.read())


def within(values, target, tol):
    return all(abs(v - target) <= tol for v in values)


# ---------------------------------------------------------------- 1
def test_criterion_01_reaction_diffusion():
    parsed = demo("reaction_diffusion.ufl")
    a, L = parsed.forms["a"], parsed.forms["L"]
    V = FunctionSpace(unit_square(32, 32), "CG", 1)
    coefs = {"f": "sin(x[0])*cos(x[1])"}
    A = assemble(a, coefficients=coefs, spaces=[V, V])
    b = assemble(L, coefficients=coefs, spaces=[V])
    D = A.to_dense()
    assert np.max(np.abs(D - D.T)) <= 1e-14
    x, its = solve_linear(A, b, method="cg", precond="jacobi", rtol=1e-10)
    assert np.linalg.norm(b.array - D @ x) <= 1e-10 * np.linalg.norm(b.array)


# ---------------------------------------------------------------- 2
@pytest.mark.parametrize("q,tol", [(1, 0.1), (2, 0.15), (3, 0.2)])
def test_criterion_02_cg_poisson_rates(q, tol):
    t = convergence.poisson_cg(q, ns=(8, 16, 32))
    l2, h1 = convergence.rates(t["L2"]), convergence.rates(t["H10"])
    print(f"CG{q}: L2 rates {l2}, H10 rates {h1}")
    assert within(l2, q + 1, tol)
    assert within(h1, q, tol)


# ---------------------------------------------------------------- 3
def test_criterion_03_dg_poisson_rate():
    t = convergence.poisson_dg(ns=(8, 16, 32), alpha=4.0, q=1)
    r = convergence.rates(t["L2"])
    print(f"DG1: L2 rates {r}")
    assert within(r, 2.0, 0.2)


# ---------------------------------------------------------------- 4
def test_criterion_04_stokes_rates():
    # n = 16, 32, 64: the pressure is pre-asymptotic on coarser meshes,
    # so the rate is read off the finest pair
    t = convergence.stokes(ns=(16, 32, 64))
    ru, rp = convergence.rates(t["velocity"]), convergence.rates(t["pressure"])
    print(f"Taylor-Hood: velocity rates {ru}, pressure rates {rp}")
    assert abs(ru[-1] - 3.0) <= 0.25
    assert abs(rp[-1] - 2.0) <= 0.25


# ---------------------------------------------------------------- 5
def test_criterion_05_newton():
    parsed = demo("nonlinear_poisson.ufl")
    V = FunctionSpace(unit_square(32, 32), "CG", 1)
    u = Function(V)
    coefs = {parsed.coefficients["u"]: u, "f": "x[0]*sin(x[1])"}
    prob = VariationalProblem(parsed.forms["a"], parsed.forms["L"],
                              [DirichletBC(V, 0.0, DomainBoundary())], nonlinear=True, u=u,
                              coefficients=coefs, newton_atol=1e-10)
    prob.solve()
    r = prob.residuals
    print(f"Newton residuals {r}")
    assert r[-1] <= 1e-10
    assert prob.iterations <= 8
    ratios = [r[k + 1] / r[k] ** 2 for k in range(len(r) - 1)]
    assert len(ratios) >= 2
    assert ratios[-1] <= 10 * ratios[-2]


# ---------------------------------------------------------------- 6
def test_criterion_06_gateaux_derivative():
    parsed = demo("nonlinear_poisson.ufl")
    u_ph = parsed.coefficients["u"]
    F, J_hand = parsed.forms["L"], parsed.forms["a"]
    J_auto = derivative(F, u_ph)
    mesh = unit_square(8, 8)
    V = FunctionSpace(mesh, "CG", 1)
    rng = np.random.default_rng(5)
    eps = 1e-5
    for _ in range(5):
        u = rng.normal(size=V.dim())
        du = rng.normal(size=V.dim())

        def residual(vec):
            return assemble(F, coefficients={u_ph: Function(V, vec), "f": "x[0]*sin(x[1])"},
                            spaces=[V]).array

        fd = (residual(u + eps * du) - residual(u - eps * du)) / (2 * eps)
        for J in (J_hand, J_auto):
            A = assemble(J, coefficients={u_ph: Function(V, u), "f": "x[0]*sin(x[1])"},
                         spaces=[V, V])
            Jdu = A @ du
            assert np.linalg.norm(Jdu - fd) <= 1e-6 * np.linalg.norm(Jdu)


# ---------------------------------------------------------------- 7
@pytest.mark.parametrize("theta,order", [(0.5, 2.0), (1.0, 1.0)])
def test_criterion_07_theta_method(theta, order):
    t = convergence.heat(theta, dts=(1e-2, 5e-3, 2.5e-3), n=32, t_end=0.1)
    r = convergence.rates(t["L2"])
    print(f"theta={theta}: errors {t['L2']}, rates {r}")
    assert within(r, order, 0.2)


# ---------------------------------------------------------------- 8
def test_criterion_08_kernel_oracle():
    rng = np.random.default_rng(8)
    worst = 0.0
    for fname, name, form in demo_forms():
        err = kernel_oracle_error(form, rng, ncells=20)
        worst = max(worst, err)
        assert err <= 1e-12, f"{fname}:{name} differs by {err:.2e}"
    print(f"worst kernel/oracle difference {worst:.2e}")
    for tdim, cell in ((1, "interval"), (2, "triangle"), (3, "tetrahedron")):
        P1 = FiniteElement("CG", cell, 1)
        v, u = Argument(0, P1), Argument(1, P1)
        X = np.vstack([np.zeros(tdim), np.eye(tdim)])
        for form, table in ((dot(grad(v), grad(u)) * dx, REFERENCE_P1_STIFFNESS),
                            (v * u * dx, REFERENCE_P1_MASS)):
            (k,) = compile_form(form)
            assert np.max(np.abs(tabulate_tensor(k, X) - table[tdim])) <= 1e-12
            B = oracle.cell_tensor(oracle.integrands_of(form.integrals), X, {}, 4)
            assert np.max(np.abs(B - table[tdim])) <= 1e-12


# ---------------------------------------------------------------- 9
def _small_meshes():
    base = unit_square(1, 1)
    out = [unit_square(1, 1), unit_square(2, 1), unit_square(1, 2), unit_square(2, 2),
           unit_square(4, 1), refine(base, MeshFunction(base, 2, [True, False], dtype=bool))]
    return [m for m in out if m.num_cells() <= 8]


def _dg_form(cell, tdim):
    el = FiniteElement("DG", cell, 1)
    v, u = Argument(0, el), Argument(1, el)
    n = FacetNormal(tdim)
    return (dot(grad(v), grad(u)) * dx + dot(jump(v, n), jump(u, n)) * dS
            - dot(avg(grad(v)), jump(u, n)) * dS + v * u * ds)


def test_criterion_09_global_assembly_oracle():
    rng = np.random.default_rng(9)
    checked = 0
    for _, _, form in demo_forms():
        for mesh in _small_meshes():
            coefs = {}
            for c in form.coefficients():
                coefs[c] = Function(FunctionSpace(mesh, c.element))
                coefs[c].array[:] = rng.normal(size=coefs[c].array.size)
            G = as_dense(assemble(form, coefficients=coefs, mesh=mesh))
            B = dense_assembly(form, mesh, coefs)
            assert np.max(np.abs(G - B)) <= 1e-12 * max(1.0, np.max(np.abs(B)))
            checked += 1
    others = [(unit_interval(n), "interval") for n in range(1, 9)] + \
             [(unit_cube(1, 1, 1), "tetrahedron")]
    for mesh, cell in others:
        a = _dg_form(cell, mesh.tdim)
        G = assemble(a, mesh=mesh).to_dense()
        assert np.max(np.abs(G - dense_assembly(a, mesh, {}))) <= 1e-12
        checked += 1
    print(f"{checked} (form, mesh) pairs checked")


# ---------------------------------------------------------------- 10
def test_criterion_10_mesh_invariants():
    m = unit_square(3, 3)
    assert m.connectivity_table() == [(2, 0)]
    m.connectivity(1, 0)
    assert set(m.connectivity_table()) == {(2, 0), (2, 1), (1, 0)}
    for mesh in (unit_interval(4), unit_square(3, 2), unit_cube(2, 1, 1)):
        D = mesh.tdim
        for d0, d1 in itertools.permutations(range(D + 1), 2):
            c, t = mesh.connectivity(d0, d1), mesh.connectivity(d1, d0)
            fwd = {(a, int(b)) for a in range(len(c)) for b in c[a]}
            back = {(int(b), a) for a in range(len(t)) for b in t[a]}
            assert fwd == back
    for nx, ny in ((1, 1), (3, 2), (5, 5)):
        assert euler(unit_square(nx, ny)) == 1
    for dims in ((1, 1, 1), (2, 2, 1), (3, 2, 2)):
        assert euler(unit_cube(*dims)) == 1
    for mesh in (unit_square(3, 3), unit_cube(1, 2, 1)):
        r = refine(mesh)
        assert abs(cell_volumes(r).sum() - cell_volumes(mesh).sum()) <= 1e-12
    m = unit_square(3, 3)
    rng = np.random.default_rng(10)
    for _ in range(3):
        marks = MeshFunction(m, 2, rng.random(m.num_cells()) < 0.3, dtype=bool)
        m = refine(m, marks)
        assert abs(cell_volumes(m).sum() - 1.0) <= 1e-12
        assert conforming(m)


# ---------------------------------------------------------------- 11
@pytest.mark.parametrize("q", [1, 2, 3])
def test_criterion_11_bc_paths(q):
    for n in (8, 16, 32):
        V = FunctionSpace(unit_square(n, n), "CG", q)
        v, u = TestFunction(V), TrialFunction(V)
        a = dot(grad(v), grad(u)) * dx
        L = v * Expression(convergence.F_POISSON, degree=q + 2) * dx
        bc = DirichletBC(V, 0.0, DomainBoundary())
        A1, b1 = assemble_system(a, L, [bc])
        S = A1.to_scipy()
        assert (S != S.T).nnz == 0  # exactly symmetric
        A2, b2 = assemble(a), assemble(L)
        apply_bc(bc, A2, b2)
        x1 = scipy.sparse.linalg.spsolve(S.tocsc(), b1.array)
        x2 = scipy.sparse.linalg.spsolve(A2.to_scipy().tocsc(), b2.array)
        assert np.max(np.abs(x1 - x2)) <= 1e-10


# ---------------------------------------------------------------- 12
def test_criterion_12_lift_functional():
    parsed = demo("lift.ufl")
    M = parsed.forms["M"]
    p = parsed.coefficients["p"]
    V = FunctionSpace(unit_square(8, 8), "CG", 1)
    one = assemble(M, coefficients={p: Function(V, np.ones(V.dim()))})
    y = assemble(M, coefficients={p: Function(V, V.tabulate_dof_coordinates()[:, 1])})
    print(f"M(1) = {one:.3e}, M(y) - 1 = {y - 1:.3e}")
    assert abs(one) <= 1e-13
    assert abs(y - 1.0) <= 1e-12


# ---------------------------------------------------------------- 13
def test_criterion_13_quadrature_exactness():
    worst = 0.0
    for tdim in (1, 2, 3):
        for degree in range(1, 11):
            rule = quadrature_rule(tdim, degree)
            for exps in itertools.product(range(degree + 1), repeat=tdim):
                if sum(exps) > degree:
                    continue
                approx = float(np.dot(rule.weights, np.prod(rule.points ** np.array(exps), axis=1)))
                exact = oracle.monomial_integral(exps)
                worst = max(worst, abs(approx - exact) / exact)
    print(f"worst relative monomial error {worst:.2e}")
    assert worst <= 1e-14


# ---------------------------------------------------------------- 14
def test_criterion_14_cli(tmp_path, capsys):
    forms = os.path.join(DEMOS, "reaction_diffusion.ufl")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli_main(["compile", forms, "--emit-ir", str(a)]) == 0
    assert cli_main(["compile", forms, "--emit-ir", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["schema"] == "femkit-kir-1"

    out = tmp_path / "u.vtk"
    assert cli_main(["solve", os.path.join(DEMOS, "nonlinear_poisson.json"),
                     "--output", str(out)]) == 0
    summary = check_vtk(out.read_text())
    assert "u" in summary["arrays"]

    mesh = unit_square(5, 3)
    write_mesh_xml(mesh, tmp_path / "m.xml")
    again = read_mesh_xml(tmp_path / "m.xml")
    assert np.array_equal(again.coordinates, mesh.coordinates)
    assert np.array_equal(again.cells, mesh.cells)
    capsys.readouterr()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
