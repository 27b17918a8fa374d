"""Convergence studies on manufactured solutions.

Each study returns the measured errors and the observed rates
log2(e_n / e_2n). Run as a script to print the tables::

    python3 scripts/convergence.py poisson --degree 2
    python3 scripts/convergence.py dg
    python3 scripts/convergence.py stokes
    python3 scripts/convergence.py heat --theta 0.5
"""
import argparse
import math
import time
from pathlib import Path

import numpy as np

from femkit.assembly import DirichletBC, DomainBoundary, VariationalProblem, assemble, errornorm
from femkit.element import FiniteElement, MixedElement, VectorElement
from femkit.form import CellSize, FacetNormal, avg, dS, div, dot, ds, dx, grad, inner, jump
from femkit.function import (Expression, Function, FunctionSpace, TestFunction, TestFunctions,
                             TrialFunction, TrialFunctions, split_mixed)
from femkit.io import problem_from_dict, run_problem
from femkit.mesh import unit_square

DEMOS = Path(__file__).resolve().parents[1] / "src" / "femkit" / "demos"

U_EXACT = "sin(pi*x[0])*sin(pi*x[1])"
F_POISSON = "2*pi*pi*sin(pi*x[0])*sin(pi*x[1])"

# Stokes: velocity is the curl of psi = sin^2(pi x) sin^2(pi y), so it is
# divergence free and vanishes on the boundary; the pressure has zero mean.
STOKES_U = ("pi*sin(pi*x[0])*sin(pi*x[0])*sin(2*pi*x[1])",
            "-pi*sin(2*pi*x[0])*sin(pi*x[1])*sin(pi*x[1])")
STOKES_P = "cos(pi*x[0])*cos(pi*x[1])"
STOKES_F = ("2*pi*pi*pi*sin(2*pi*x[1])*(1 - 2*cos(2*pi*x[0])) - pi*sin(pi*x[0])*cos(pi*x[1])",
            "-2*pi*pi*pi*sin(2*pi*x[0])*(1 - 2*cos(2*pi*x[1])) - pi*cos(pi*x[0])*sin(pi*x[1])")


def rates(errors):
    e = np.asarray(errors, dtype=float)
    return np.log(e[:-1] / e[1:]) / math.log(2.0)


def poisson_cg(q, ns=(8, 16, 32)):
    """L2 and H1-seminorm errors of CG_q for -lap u = f, u = 0 on the boundary."""
    l2, h1 = [], []
    exact = Expression(U_EXACT, degree=q + 3)
    for n in ns:
        V = FunctionSpace(unit_square(n, n), "CG", q)
        v, u = TestFunction(V), TrialFunction(V)
        f = Expression(F_POISSON, degree=q + 2)
        bc = DirichletBC(V, 0.0, DomainBoundary())
        u_h = VariationalProblem(dot(grad(v), grad(u)) * dx, v * f * dx, [bc],
                                 method="cg", rtol=1e-12).solve()
        l2.append(errornorm(u_h, exact, "L2"))
        h1.append(errornorm(u_h, exact, "H10"))
    return {"n": list(ns), "L2": l2, "H10": h1}


def poisson_dg(ns=(8, 16, 32), alpha=4.0, q=1):
    """Symmetric interior penalty with weakly imposed homogeneous Dirichlet data."""
    l2 = []
    exact = Expression(U_EXACT, degree=q + 3)
    for n in ns:
        V = FunctionSpace(unit_square(n, n), "DG", q)
        v, u = TestFunction(V), TrialFunction(V)
        nrm, h = FacetNormal(2), CellSize()
        a = (dot(grad(v), grad(u)) * dx
             - dot(jump(v, nrm), avg(grad(u))) * dS - dot(avg(grad(v)), jump(u, nrm)) * dS
             - v * dot(grad(u), nrm) * ds - dot(grad(v), nrm) * u * ds
             + alpha / h("+") * dot(jump(v, nrm), jump(u, nrm)) * dS + (alpha / h) * v * u * ds)
        f = Expression(F_POISSON, degree=q + 2)
        u_h = VariationalProblem(a, v * f * dx, method="cg", rtol=1e-12).solve()
        l2.append(errornorm(u_h, exact, "L2"))
    return {"n": list(ns), "L2": l2}


def _origin(x, on_boundary):
    return abs(x[0]) < 1e-12 and abs(x[1]) < 1e-12


def stokes(ns=(16, 32, 64), method="bicgstab", precond="jacobi", rtol=1e-10):
    """Taylor-Hood P2-P1; pressure fixed at the origin, then shifted to zero mean."""
    eu, ep = [], []
    u_exact = Expression(STOKES_U, degree=5)
    p_exact = Expression(STOKES_P, degree=4)
    for n in ns:
        mesh = unit_square(n, n)
        W = FunctionSpace(mesh, MixedElement(VectorElement("CG", "triangle", 2),
                                             FiniteElement("CG", "triangle", 1)))
        v, q = TestFunctions(W)
        u, p = TrialFunctions(W)
        f = Expression(STOKES_F, degree=4)
        a = (inner(grad(v), grad(u)) - div(v) * p + q * div(u)) * dx
        L = dot(v, f) * dx
        bcs = [DirichletBC(W.sub(0), (0.0, 0.0), DomainBoundary()),
               DirichletBC(W.sub(1), 1.0, _origin, method="pointwise")]
        w = VariationalProblem(a, L, bcs, method=method, precond=precond, rtol=rtol).solve()
        u_h, p_h = split_mixed(w)
        mean = assemble(p_h * dx)
        p_h = Function(p_h.function_space, p_h.array - mean)
        eu.append(errornorm(u_h, u_exact, "L2"))
        ep.append(errornorm(p_h, p_exact, "L2"))
    return {"n": list(ns), "velocity": eu, "pressure": ep}


def heat(theta, dts=(1e-2, 5e-3, 2.5e-3), n=32, t_end=0.1):
    """Theta-method for the heat equation started from the first eigenmode."""
    errors = []
    exact = Expression(f"exp(-2*pi*pi*{t_end!r})*{U_EXACT}", degree=5)
    for dt in dts:
        doc = {"schema": "femkit-prob-1", "forms": "heat_theta.ufl",
               "mesh": {"generate": "square", "divisions": [n, n]},
               "coefficients": {"f": 0.0},
               "bcs": [{"value": 0.0, "region": "on_boundary"}],
               "solver": {"method": "cg", "rtol": 1e-13},
               "transient": {"t_end": t_end, "dt": dt, "theta": theta, "initial": U_EXACT}}
        res = run_problem(problem_from_dict(doc, DEMOS))
        errors.append(errornorm(res.solution, exact, "L2"))
    return {"dt": list(dts), "L2": errors}


def _print(name, table, keys):
    print(name)
    axis = "n" if "n" in table else "dt"
    for i, h in enumerate(table[axis]):
        row = "  ".join(f"{k}={table[k][i]:.4e}" for k in keys)
        print(f"  {axis}={h:<8} {row}")
    for k in keys:
        print(f"  rate {k}: " + " ".join(f"{r:.3f}" for r in rates(table[k])))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("study", choices=["poisson", "dg", "stokes", "heat"])
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--theta", type=float, default=0.5)
    args = p.parse_args(argv)
    t0 = time.perf_counter()
    if args.study == "poisson":
        _print(f"CG{args.degree} Poisson", poisson_cg(args.degree), ["L2", "H10"])
    elif args.study == "dg":
        _print("DG1 interior penalty Poisson", poisson_dg(), ["L2"])
    elif args.study == "stokes":
        _print("Taylor-Hood Stokes", stokes(), ["velocity", "pressure"])
    else:
        _print(f"heat equation, theta={args.theta}", heat(args.theta), ["L2"])
    print(f"  ({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
