import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracle
from conftest import neighbour_simplex, random_simplex
from harness import demo_forms, kernel_oracle_error
from femkit.compiler import (IR_SCHEMA, REFERENCE_P1_MASS, REFERENCE_P1_STIFFNESS, compile_form,
                             compile_integral, emit_kernel_ir, facet_rule, load_kernel_ir,
                             quadrature_rule, tabulate_tensor)
from femkit.element import FiniteElement, MixedElement, VectorElement
from femkit.errors import DegreeOutOfRange, FemkitError
from femkit.form import (Argument, CellSize, Coefficient, FacetNormal, SpatialCoordinate, avg,
                         check_form, dS, div, dot, ds, dx, exp, grad, inner, jump, sin,
                         split_argument)
from femkit.form.algorithms import group_integrals

TDIMS = [1, 2, 3]


def reference_simplex(tdim):
    return np.vstack([np.zeros(tdim), np.eye(tdim)])


# ---------------------------------------------------------------- quadrature
@pytest.mark.parametrize("tdim", TDIMS)
@pytest.mark.parametrize("degree", range(1, 11))
def test_quadrature_exactness(tdim, degree):
    rule = quadrature_rule(tdim, degree)
    for exps in itertools.product(range(degree + 1), repeat=tdim):
        if sum(exps) > degree:
            continue
        approx = float(np.dot(rule.weights, np.prod(rule.points ** np.array(exps), axis=1)))
        exact = oracle.monomial_integral(exps)
        assert abs(approx - exact) <= 1e-14 * exact


def test_triangle_degree_one_integrates_x():
    rule = quadrature_rule("triangle", 1)
    assert np.dot(rule.weights, rule.points[:, 0]) == pytest.approx(1 / 6, rel=1e-15)


def test_interval_degree_three_has_two_points():
    rule = quadrature_rule("interval", 3)
    assert len(rule) == 2
    assert np.dot(rule.weights, rule.points[:, 0] ** 3) == pytest.approx(0.25, rel=1e-15)


@pytest.mark.parametrize("tdim", TDIMS)
def test_weights_sum_to_reference_volume(tdim):
    for degree in range(1, 21):
        w = quadrature_rule(tdim, degree).weights
        assert np.all(w > 0)
        assert w.sum() == pytest.approx(1 / np.prod(range(1, tdim + 1)), rel=1e-13)


def test_points_inside_reference():
    for tdim in TDIMS:
        p = quadrature_rule(tdim, 12).points
        assert np.all(p >= 0) and np.all(p.sum(axis=1) <= 1)


def test_degree_out_of_range():
    with pytest.raises(DegreeOutOfRange):
        quadrature_rule("triangle", 21)
    with pytest.raises(DegreeOutOfRange):
        quadrature_rule("triangle", 0)


def test_facet_rule_vertex():
    r = facet_rule(1, 3)
    assert len(r) == 1 and r.weights[0] == 1.0


# ---------------------------------------------------------------- reference tensors
def _p1_forms(tdim):
    cell = {1: "interval", 2: "triangle", 3: "tetrahedron"}[tdim]
    P1 = FiniteElement("CG", cell, 1)
    v, u = Argument(0, P1), Argument(1, P1)
    return dot(grad(v), grad(u)) * dx, v * u * dx


@pytest.mark.parametrize("tdim", TDIMS)
def test_reference_p1_tensors(tdim):
    K, M = _p1_forms(tdim)
    X = reference_simplex(tdim)
    for form, expected in ((K, REFERENCE_P1_STIFFNESS[tdim]), (M, REFERENCE_P1_MASS[tdim])):
        (k,) = compile_form(form)
        assert np.allclose(tabulate_tensor(k, X), expected, atol=1e-15, rtol=0)


def test_reference_mass_triangle_value():
    expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24
    assert np.allclose(REFERENCE_P1_MASS[2], expected, atol=0)


@pytest.mark.parametrize("tdim", TDIMS)
def test_reference_p1_against_oracle(tdim):
    X = reference_simplex(tdim)
    for form, table in zip(_p1_forms(tdim), (REFERENCE_P1_STIFFNESS, REFERENCE_P1_MASS)):
        integrands = oracle.integrands_of(form.integrals)
        B = oracle.cell_tensor(integrands, X, {}, 4)
        assert np.allclose(B, table[tdim], atol=1e-14, rtol=0)


@given(st.integers(0, 2 ** 31), st.sampled_from(TDIMS), st.floats(0.1, 10.0))
def test_scaling_and_translation(seed, tdim, s):
    rng = np.random.default_rng(seed)
    K, M = _p1_forms(tdim)
    (kK,), (kM,) = compile_form(K), compile_form(M)
    X = random_simplex(rng, tdim)
    shift = rng.normal(size=tdim)
    AK, AM = tabulate_tensor(kK, X), tabulate_tensor(kM, X)
    assert np.allclose(tabulate_tensor(kK, X + shift), AK, atol=1e-12)
    assert np.allclose(tabulate_tensor(kM, X + shift), AM, atol=1e-12)
    # stiffness scales with h^(d-2), mass with h^d
    assert np.allclose(tabulate_tensor(kK, s * X), s ** (tdim - 2) * AK, rtol=1e-10, atol=1e-12)
    assert np.allclose(tabulate_tensor(kM, s * X), s ** tdim * AM, rtol=1e-10, atol=1e-14)


@given(st.integers(0, 2 ** 31), st.sampled_from(TDIMS))
def test_vertex_permutation_permutes_p1_tensor(seed, tdim):
    rng = np.random.default_rng(seed)
    (k,) = compile_form(_p1_forms(tdim)[0])
    X = random_simplex(rng, tdim)
    perm = rng.permutation(tdim + 1)
    A = tabulate_tensor(k, X)
    assert np.allclose(tabulate_tensor(k, X[perm]), A[np.ix_(perm, perm)], atol=1e-11)


# ---------------------------------------------------------------- kernel IR
def _stiffness_plus_mass():
    P1 = FiniteElement("CG", "triangle", 1)
    v, u = Argument(0, P1), Argument(1, P1)
    return dot(grad(v), grad(u)) * dx + v * u * dx


def test_stiffness_plus_mass_merges_into_one_tape():
    kernels = compile_form(_stiffness_plus_mass())
    assert len(kernels) == 1
    ir = kernels[0].to_ir()
    assert ir["schema"] == IR_SCHEMA == "femkit-kir-1"
    assert ir["kind"] == "cell"


def test_ir_round_trip(rng):
    (k,) = compile_form(_stiffness_plus_mass())
    text = emit_kernel_ir(k)
    again = load_kernel_ir(text)
    X = random_simplex(rng, 2)
    assert np.array_equal(tabulate_tensor(again, X), tabulate_tensor(k, X))
    assert emit_kernel_ir(again) == text


def test_ir_is_deterministic():
    a = emit_kernel_ir(compile_form(_stiffness_plus_mass()), pretty=True)
    b = emit_kernel_ir(compile_form(_stiffness_plus_mass()), pretty=True)
    assert a == b
    assert json.loads(a)["schema"] == IR_SCHEMA


def test_ir_bad_schema():
    doc = compile_form(_stiffness_plus_mass())[0].to_ir()
    doc["schema"] = "something-else"
    with pytest.raises(FemkitError):
        load_kernel_ir(doc)


def test_pseudocode_lists_output():
    (k,) = compile_form(_stiffness_plus_mass())
    text = k.pseudocode()
    assert "A" in text and len(text.splitlines()) > 3


def test_explicit_degree_override():
    form = _stiffness_plus_mass()
    meta = check_form(form)
    (group,) = group_integrals(form).values()
    k = compile_integral(group, meta, degree=7)
    assert k.degree == 7


# ---------------------------------------------------------------- oracle equivalence
DEMOS = demo_forms()


@pytest.mark.parametrize("entry", DEMOS, ids=[f"{f}:{n}" for f, n, _ in DEMOS])
def test_demo_kernels_match_oracle(entry, rng):
    assert kernel_oracle_error(entry[2], rng, ncells=20) <= 1e-12


def _extra_forms():
    out = {}
    I2 = FiniteElement("CG", "interval", 2)
    v, u = Argument(0, I2), Argument(1, I2)
    w = Coefficient(I2)
    x = SpatialCoordinate(1)
    out["interval"] = (dot(grad(v), grad(u)) * (1 + w * w) * dx + x[0] * x[0] * v * u * dx
                       + w * v * u * ds)
    D1 = FiniteElement("DG", "interval", 1)
    v, u = Argument(0, D1), Argument(1, D1)
    n = FacetNormal(1)
    out["interval_dg"] = (dot(jump(v, n), jump(u, n)) * dS
                          - dot(avg(grad(v)), jump(u, n)) * dS)
    T2 = FiniteElement("CG", "tetrahedron", 2)
    v, u = Argument(0, T2), Argument(1, T2)
    f = Coefficient(FiniteElement("CG", "tetrahedron", 1))
    out["tet"] = (1 + f * f) * inner(grad(v), grad(u)) * dx + v * u * ds
    TD = FiniteElement("DG", "tetrahedron", 1)
    v, u = Argument(0, TD), Argument(1, TD)
    n = FacetNormal(3)
    h = CellSize()
    out["tet_dg"] = (4.0 / h("+") * dot(jump(v, n), jump(u, n)) * dS
                     - dot(avg(grad(v)), jump(u, n)) * dS + v * u * dot(n, n) * ds)
    TH = MixedElement(VectorElement("CG", "tetrahedron", 2), FiniteElement("CG", "tetrahedron", 1))
    V, U = Argument(0, TH), Argument(1, TH)
    vv, q = split_argument(V)
    uu, p = split_argument(U)
    out["tet_stokes"] = inner(grad(vv), grad(uu)) * dx - div(vv) * p * dx + q * div(uu) * dx
    return out


EXTRA = _extra_forms()


@pytest.mark.parametrize("name", sorted(EXTRA))
def test_extra_kernels_match_oracle(name, rng):
    assert kernel_oracle_error(EXTRA[name], rng, ncells=5) <= 1e-12


def test_nonpolynomial_kernel_converges_to_oracle(rng):
    P2 = FiniteElement("CG", "triangle", 2)
    v, u = Argument(0, P2), Argument(1, P2)
    f = Coefficient(FiniteElement("CG", "triangle", 1))
    x = SpatialCoordinate(2)
    form = exp(0.3 * f) * sin(x[0] + x[1]) * v * u * dx
    assert kernel_oracle_error(form, rng, ncells=3, degree=18) <= 1e-12


def _dg_interior_form():
    P = FiniteElement("DG", "triangle", 2)
    v, u = Argument(0, P), Argument(1, P)
    n = FacetNormal(2)
    return (dot(jump(v, n), jump(u, n)) * dS - dot(avg(grad(v)), jump(u, n)) * dS
            - dot(jump(v, n), avg(grad(u))) * dS)


@given(st.integers(0, 2 ** 31))
def test_interior_facet_side_swap(seed):
    rng = np.random.default_rng(seed)
    (k,) = compile_form(_dg_interior_form())
    X = random_simplex(rng, 2)
    Y = neighbour_simplex(rng, X)
    A = tabulate_tensor(k, X, neighbor_coordinates=Y)
    B = tabulate_tensor(k, Y, neighbor_coordinates=X)
    n = A.shape[0] // 2
    swap = np.r_[np.arange(n, 2 * n), np.arange(n)]
    assert np.allclose(B, A[np.ix_(swap, swap)], atol=1e-11)


def test_interior_facet_needs_shared_facet(rng):
    (k,) = compile_form(_dg_interior_form())
    X = random_simplex(rng, 2)
    with pytest.raises(FemkitError):
        tabulate_tensor(k, X, neighbor_coordinates=X + 5.0)
