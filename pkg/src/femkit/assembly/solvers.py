"""Linear and nonlinear variational problems, norms and error norms."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from femkit.assembly.assemble import _resolve, assemble, bind
from femkit.assembly.bcs import collect_bcs
from femkit.element import FiniteElement, MixedElement, VectorElement
from femkit.element.finite_element import MAX_DEGREE
from femkit.errors import NewtonNoConvergence, ShapeMismatch, UnsupportedKind
from femkit.form import algorithms
from femkit.form.expr import Coefficient, grad, inner
from femkit.form.form import Form, dx
from femkit.function import Function, FunctionSpace, interpolate
from femkit.la import Vector, solve_linear

log = logging.getLogger("femkit.solve")


def assemble_system(a: Form, L: Form, bcs=(), coefficients=None, spaces=None, mesh=None, **markers):
    """Matrix and vector with Dirichlet conditions applied symmetrically.

    Constrained rows and columns are removed element by element (their
    known values moved to the right-hand side); afterwards each
    constrained row carries a unit diagonal and the prescribed value.
    """
    a = bind(a, coefficients)
    L = bind(L, coefficients)
    Vs, mesh = _resolve(a, spaces, mesh)
    n = Vs[0].dim()
    mask, g = collect_bcs(bcs, n)
    lift = Vector(n)
    A = assemble(a, spaces=Vs, mesh=mesh, bc_data=(mask, g), lift=lift, **markers)
    if L.is_empty():
        b = Vector(n)
    else:
        b = assemble(L, spaces=Vs[:1], mesh=mesh, **markers)
    b.array += lift.array
    dofs = np.nonzero(mask)[0]
    if len(dofs):
        diag = A.locate(dofs, dofs)
        A.data[diag] = 1.0
        b.array[dofs] = g[dofs]
    return A, b


def _auto_method(a, method, precond):
    if method is None:
        method = "cg" if algorithms.is_symmetric(a) else "bicgstab"
    return method, precond


@dataclass
class VariationalProblem:
    """``a(v, u) = L(v)`` (linear) or ``F(v; u) = 0`` with Jacobian ``a`` (nonlinear).

    For nonlinear problems ``L`` is the residual form ``F`` and ``a`` its
    Jacobian (computed with :func:`derivative` when ``None``); ``u`` is the
    unknown Function the forms are written in.
    """

    a: Form | None
    L: Form
    bcs: list = field(default_factory=list)
    nonlinear: bool = False
    u: Function | None = None
    coefficients: dict | None = None
    spaces: list | None = None
    mesh: object = None
    method: str | None = None
    precond: str = "jacobi"
    rtol: float = 1e-10
    atol: float = 1e-50
    maxit: int | None = None
    newton_atol: float = 1e-10
    newton_rtol: float = 1e-9
    newton_maxit: int = 50
    iterations: int = 0
    residuals: list = field(default_factory=list)
    linear_iterations: list = field(default_factory=list)

    def __post_init__(self):
        if self.bcs is None:
            self.bcs = []
        elif not isinstance(self.bcs, (list, tuple)):
            self.bcs = [self.bcs]

    def solve(self, u=None):
        if self.nonlinear:
            return solve_newton_vp(self, u if u is not None else self.u)
        return solve_linear_vp(self)


def solve_linear_vp(problem: VariationalProblem) -> Function:
    a, L = problem.a, problem.L
    A, b = assemble_system(a, L, problem.bcs, problem.coefficients, problem.spaces, problem.mesh)
    Vs, _ = _resolve(bind(a, problem.coefficients), problem.spaces, problem.mesh)
    method, precond = _auto_method(a, problem.method, problem.precond)
    x, its = solve_linear(A, b, method=method, precond=precond, rtol=problem.rtol,
                          atol=problem.atol, maxit=problem.maxit)
    problem.iterations = its
    problem.linear_iterations = [its]
    log.info("linear solve (%s): %d iterations", method, its)
    return Function(Vs[1] if len(Vs) > 1 else Vs[0], x)


def solve_newton_vp(problem: VariationalProblem, u: Function) -> Function:
    """Newton's method on ``F(u) = 0`` starting from ``u`` (updated in place).

    Each step solves ``J du = -F(u)`` with ``du = g - u`` on constrained
    dofs, so Dirichlet values are reached by the first increment and later
    increments vanish there. The conditions are applied symmetrically (as in
    :func:`assemble_system`) so a symmetric Jacobian keeps CG applicable.
    Converges when ``||F|| <= max(atol, rtol * ||F_0||)``, with ``F``
    measured after the boundary rows are replaced by ``g - u``.
    """
    if u is None:
        raise ValueError("Newton solves need the unknown Function u")
    F = bind(problem.L, problem.coefficients)
    J = problem.a
    if J is None:
        J = algorithms.derivative(F, u)
    J = bind(J, problem.coefficients)
    V = u.function_space
    n = V.dim()
    mask, g = collect_bcs(problem.bcs, n)
    dofs = np.nonzero(mask)[0]
    method, precond = _auto_method(J, problem.method, problem.precond)
    problem.residuals = []
    problem.linear_iterations = []
    r0 = None
    for it in range(problem.newton_maxit + 1):
        b = assemble(F, spaces=[V])
        b.array *= -1.0
        inc = np.where(mask, g - u.array, 0.0)
        b.array[dofs] = inc[dofs]
        res = float(np.linalg.norm(b.array))
        problem.residuals.append(res)
        if r0 is None:
            r0 = res
        log.info("newton %d: residual %.3e", it, res)
        if res <= max(problem.newton_atol, problem.newton_rtol * r0):
            problem.iterations = it
            return u
        if it == problem.newton_maxit:
            break
        lift = Vector(n)
        A = assemble(J, spaces=[V, V], bc_data=(mask, inc), lift=lift)
        if len(dofs):
            A.data[A.locate(dofs, dofs)] = 1.0
        b.array += lift.array
        b.array[dofs] = inc[dofs]
        du, its = solve_linear(A, b, method=method, precond=precond,
                               rtol=min(problem.rtol, 1e-12), atol=problem.atol, maxit=problem.maxit)
        problem.linear_iterations.append(its)
        u.array[:] += du
    problem.iterations = problem.newton_maxit
    raise NewtonNoConvergence(problem.newton_maxit, problem.residuals)


def solve_linear_problem(a, L, bcs=(), **kwargs) -> Function:
    return VariationalProblem(a, L, list(bcs), **kwargs).solve()


def solve_nonlinear_problem(F, u, bcs=(), J=None, **kwargs) -> Function:
    return VariationalProblem(J, F, list(bcs), nonlinear=True, u=u, **kwargs).solve()


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------
NORM_KINDS = ("L2", "H1", "H10")


def _norm_form(f, kind):
    if kind not in NORM_KINDS:
        raise UnsupportedKind(f"unknown norm {kind!r}; expected one of {NORM_KINDS}")
    if kind == "L2":
        return inner(f, f) * dx
    if kind == "H10":
        return inner(grad(f), grad(f)) * dx
    return (inner(f, f) + inner(grad(f), grad(f))) * dx


def compute_norm(f, kind="L2", mesh=None) -> float:
    """L2, H1 or H1-seminorm ("H10") of a Function (or an expression on ``mesh``)."""
    if kind not in NORM_KINDS:
        raise UnsupportedKind(f"unknown norm {kind!r}; expected one of {NORM_KINDS}")
    if mesh is None and isinstance(f, Function):
        mesh = f.function_space.mesh
    val = assemble(_norm_form(f, kind), mesh=mesh)
    return float(np.sqrt(max(val, 0.0)))


norm = compute_norm


def _raised(element, rise):
    d = element.descriptor
    if element.is_compound():
        subs = [_raised(s, rise) for s in element.sub_elements]
        if d.family == "Vector":
            s0 = subs[0].descriptor
            return VectorElement(s0.family, s0.cell, s0.degree, len(subs))
        return MixedElement(*subs)
    family = "CG" if d.family == "CG" else "DG"
    degree = min(d.degree + rise, MAX_DEGREE)
    if family == "CG" and d.family == "CG":
        return FiniteElement("CG", d.cell, degree)
    return FiniteElement("DG", d.cell, degree)


def errornorm(u_h: Function, u_exact, kind="L2", degree_rise=2) -> float:
    """Norm of ``u_exact - u_h`` after interpolating both into a space of
    degree raised by ``degree_rise``."""
    if kind not in NORM_KINDS:
        raise UnsupportedKind(f"unknown norm {kind!r}; expected one of {NORM_KINDS}")
    V = u_h.function_space
    W = FunctionSpace(V.mesh, _raised(V.element, degree_rise))
    if isinstance(u_exact, Coefficient) and not isinstance(u_exact, Function):
        raise ShapeMismatch("bind the exact solution to a Function or Expression")
    e = interpolate(u_exact, W)
    e.array[:] -= interpolate(u_h, W).array
    return compute_norm(e, kind)


__all__ = [
    "VariationalProblem", "assemble_system", "compute_norm", "errornorm", "norm",
    "solve_linear_problem", "solve_linear_vp", "solve_newton_vp", "solve_nonlinear_problem",
]
