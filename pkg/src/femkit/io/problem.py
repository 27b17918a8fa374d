"""Problem descriptors (JSON) and the steady / Newton / theta-method drivers."""
from __future__ import annotations

import ast
import json
import logging
import math
import numbers
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from femkit.assembly import (DirichletBC, VariationalProblem, assemble, assemble_system, bind,
                             collect_bcs)
from femkit.assembly.solvers import _auto_method
from femkit.errors import FormSyntaxError, SchemaMismatch, UnknownIdentifier
from femkit.form import algorithms
from femkit.form.expr import Coefficient, Constant
from femkit.form.parser import parse_form_file
from femkit.function import Expression, Function, FunctionSpace, interpolate
from femkit.io.vtk import write_vtk
from femkit.io.xmlfile import read_mesh_xml, read_meshfunction_xml, read_vector_xml
from femkit.la import Vector, solve_linear
from femkit.mesh import generate_unit_mesh, refine

PROBLEM_SCHEMA = "femkit-prob-1"
log = logging.getLogger("femkit.driver")


# ---------------------------------------------------------------------------
# descriptor dataclasses
# ---------------------------------------------------------------------------
@dataclass
class SolverOptions:
    method: str | None = None          # cg | bicgstab | lu; None selects by symmetry
    precond: str = "jacobi"
    rtol: float = 1e-10
    atol: float = 1e-50
    maxit: int | None = None
    newton_rtol: float = 1e-9
    newton_atol: float = 1e-10
    newton_maxit: int = 50


@dataclass
class TransientOptions:
    t_end: float
    dt: float
    theta: float = 0.5
    initial: object = 0.0
    output_every: int = 1
    previous: str = "u0"       # coefficient holding the previous time level
    step_name: str = "k"       # constant bound to dt
    theta_name: str = "theta"  # constant bound to theta (if the forms use it)
    reuse_matrix: bool | None = None


@dataclass
class BCSpec:
    value: object
    region: object = "on_boundary"
    subspace: tuple = ()
    method: str = "topological"


@dataclass
class ProblemDescriptor:
    forms: str
    mesh: object
    coefficients: dict = field(default_factory=dict)
    bcs: list = field(default_factory=list)
    markers: str | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    unknown: str | None = None
    transient: TransientOptions | None = None
    base_dir: Path = field(default_factory=Path)

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


_TOP_KEYS = {"schema", "forms", "mesh", "coefficients", "bcs", "markers", "solver", "unknown",
             "transient", "description"}


def _dataclass_from(cls, data, what):
    names = set(cls.__dataclass_fields__)
    extra = set(data) - names
    if extra:
        raise SchemaMismatch(f"unknown {what} keys: {sorted(extra)}")
    return cls(**data)


def problem_from_dict(doc: dict, base_dir=".") -> ProblemDescriptor:
    if doc.get("schema") != PROBLEM_SCHEMA:
        raise SchemaMismatch(f"problem schema must be {PROBLEM_SCHEMA!r}, got {doc.get('schema')!r}")
    extra = set(doc) - _TOP_KEYS
    if extra:
        raise SchemaMismatch(f"unknown problem keys: {sorted(extra)}")
    for key in ("forms", "mesh"):
        if key not in doc:
            raise SchemaMismatch(f"problem lacks {key!r}")
    bcs = []
    for b in doc.get("bcs", []):
        b = dict(b)
        if "subspace" in b:
            b["subspace"] = tuple(b["subspace"])
        bcs.append(_dataclass_from(BCSpec, b, "bc"))
    transient = doc.get("transient")
    if transient is not None:
        transient = _dataclass_from(TransientOptions, transient, "transient")
        if not 0.0 <= transient.theta <= 1.0:
            raise SchemaMismatch("theta must lie in [0, 1]")
        if transient.dt <= 0 or transient.t_end <= 0:
            raise SchemaMismatch("dt and t_end must be positive")
    return ProblemDescriptor(
        forms=doc["forms"], mesh=doc["mesh"], coefficients=dict(doc.get("coefficients", {})),
        bcs=bcs, markers=doc.get("markers"),
        solver=_dataclass_from(SolverOptions, doc.get("solver", {}), "solver"),
        unknown=doc.get("unknown"), transient=transient, base_dir=Path(base_dir))


def load_problem(path) -> ProblemDescriptor:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return problem_from_dict(doc, path.parent)


# ---------------------------------------------------------------------------
# boundary predicates written as strings
# ---------------------------------------------------------------------------
_CMP = {ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater, ast.GtE: np.greater_equal,
        ast.Eq: np.equal, ast.NotEq: np.not_equal}
_ARITH = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
          ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b}
BC_TOL = 1e-10


def compile_predicate(text: str):
    """``inside(x, on_boundary)`` from a boolean expression such as
    ``"near(x[0], 0) and on_boundary"`` (names: x, on_boundary, pi;
    functions: near, abs)."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise FormSyntaxError(f"bad region predicate: {exc.msg}", exc.lineno, exc.offset) from None

    def ev(n, x, ob):
        if isinstance(n, ast.Expression):
            return ev(n.body, x, ob)
        if isinstance(n, ast.BoolOp):
            vals = (ev(v, x, ob) for v in n.values)
            return all(vals) if isinstance(n.op, ast.And) else any(vals)
        if isinstance(n, ast.UnaryOp):
            v = ev(n.operand, x, ob)
            if isinstance(n.op, ast.Not):
                return not v
            if isinstance(n.op, ast.USub):
                return -v
        if isinstance(n, ast.Compare):
            left = ev(n.left, x, ob)
            for op, right in zip(n.ops, n.comparators):
                r = ev(right, x, ob)
                if type(op) not in _CMP or not _CMP[type(op)](left, r):
                    return False
                left = r
            return True
        if isinstance(n, ast.BinOp) and type(n.op) in _ARITH:
            return _ARITH[type(n.op)](ev(n.left, x, ob), ev(n.right, x, ob))
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float, bool)):
            return n.value
        if isinstance(n, ast.Name):
            if n.id == "on_boundary":
                return ob
            if n.id == "pi":
                return math.pi
            raise UnknownIdentifier(f"unknown name {n.id!r} in region predicate")
        if isinstance(n, ast.Subscript) and isinstance(n.value, ast.Name) and n.value.id == "x":
            return x[int(ev(n.slice, x, ob))]
        if isinstance(n, ast.Call) and isinstance(n.func, ast.Name):
            args = [ev(a, x, ob) for a in n.args]
            if n.func.id == "near" and len(args) in (2, 3):
                tol = args[2] if len(args) == 3 else BC_TOL
                return abs(args[0] - args[1]) < tol
            if n.func.id == "abs" and len(args) == 1:
                return abs(args[0])
            raise UnknownIdentifier(f"unknown function {n.func.id!r} in region predicate")
        raise FormSyntaxError(f"unsupported syntax {type(n).__name__} in region predicate",
                              getattr(n, "lineno", 1), getattr(n, "col_offset", 0))

    def inside(x, on_boundary):
        return bool(ev(tree, x, on_boundary))

    inside.__doc__ = text
    return inside


# ---------------------------------------------------------------------------
# building the problem
# ---------------------------------------------------------------------------
def build_mesh(desc: ProblemDescriptor, mesh_override=None):
    spec = mesh_override if mesh_override is not None else desc.mesh
    if isinstance(spec, str):
        return read_mesh_xml(desc.path(spec))
    if "file" in spec:
        mesh = read_mesh_xml(desc.path(spec["file"]))
    else:
        mesh = generate_unit_mesh(spec["generate"], spec["divisions"])
    for _ in range(int(spec.get("refine", 0))):
        mesh = refine(mesh)
    return mesh


def _coefficient_value(desc, mesh, holder, value):
    if isinstance(value, dict):
        if "file" in value:
            V = FunctionSpace(mesh, holder.element)
            return Function(V, read_vector_xml(desc.path(value["file"])), name=holder.name)
        if "expression" in value:
            return Expression(value["expression"], degree=value.get("degree", 2))
        raise SchemaMismatch(f"coefficient {holder.name}: expected 'file' or 'expression'")
    if isinstance(holder, Coefficient) and isinstance(value, (str, list, tuple)) and \
            all(isinstance(v, str) for v in np.atleast_1d(value)):
        text = tuple(value) if isinstance(value, list) else value
        return Expression(text, degree=holder.element.degree + 1)
    return value


@dataclass
class Setup:
    mesh: object
    parsed: object
    a: object
    L: object
    V: FunctionSpace
    bcs: list
    bindings: dict


def setup_problem(desc: ProblemDescriptor, mesh=None) -> Setup:
    mesh = mesh if mesh is not None else build_mesh(desc)
    text = desc.path(desc.forms).read_text(encoding="utf-8")
    parsed = parse_form_file(text)
    forms = parsed.forms
    holders = {**parsed.coefficients, **parsed.constants}
    bindings = {}
    for name, value in desc.coefficients.items():
        if name not in holders:
            raise UnknownIdentifier(f"coefficient {name!r} is not defined in {desc.forms}")
        bindings[holders[name]] = _coefficient_value(desc, mesh, holders[name], value)
    L = forms.get("L", forms.get("F"))
    if L is None:
        raise SchemaMismatch(f"{desc.forms} defines no linear form L (or residual F)")
    a = forms.get("a")
    if desc.unknown is not None:
        holder = holders.get(desc.unknown)
        if not isinstance(holder, Coefficient):
            raise UnknownIdentifier(f"unknown {desc.unknown!r} is not a coefficient of the forms")
        if a is None:
            a = algorithms.derivative(L, holder)
        V = FunctionSpace(mesh, holder.element)
    else:
        if a is None:
            raise SchemaMismatch(f"{desc.forms} defines no bilinear form a")
        V = FunctionSpace(mesh, a.arguments()[-1].element)
    markers = read_meshfunction_xml(desc.path(desc.markers), mesh) if desc.markers else None
    bcs = []
    for b in desc.bcs:
        S = V
        for i in b.subspace:
            S = S.sub(i)
        region = b.region
        marker = None
        if isinstance(region, dict) and "marker" in region:
            if markers is None:
                raise SchemaMismatch("marker boundary condition without a markers file")
            region, marker = markers, region["marker"]
        elif isinstance(region, str) and region != "on_boundary":
            region = compile_predicate(region)
        value = b.value
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            value = tuple(value)
        bcs.append(DirichletBC(S, value, region, marker=marker, method=b.method))
    return Setup(mesh, parsed, a, L, V, bcs, bindings)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------
@dataclass
class RunResult:
    solution: Function
    kind: str
    iterations: int = 0
    residuals: list = field(default_factory=list)
    steps: int = 0
    times: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    matrix_reused: bool = False


def _solver_kwargs(opts: SolverOptions, override: dict):
    o = {**opts.__dict__, **{k: v for k, v in override.items() if v is not None}}
    return o


def run_problem(desc: ProblemDescriptor, output=None, mesh=None, **override) -> RunResult:
    """Solve a described problem; ``override`` replaces solver options."""
    s = setup_problem(desc, mesh)
    opts = _solver_kwargs(desc.solver, override)
    if desc.transient is not None:
        return _run_transient(desc, s, opts, output)
    if desc.unknown is not None:
        holder = s.parsed.coefficients[desc.unknown]
        u = Function(s.V, name=desc.unknown)
        bindings = {**s.bindings, holder: u}
        problem = VariationalProblem(
            bind(s.a, bindings), bind(s.L, bindings), s.bcs, nonlinear=True, u=u,
            method=opts["method"], precond=opts["precond"], rtol=opts["rtol"], atol=opts["atol"],
            maxit=opts["maxit"], newton_rtol=opts["newton_rtol"], newton_atol=opts["newton_atol"],
            newton_maxit=opts["newton_maxit"])
        problem.solve(u)
        result = RunResult(u, "newton", problem.iterations, list(problem.residuals))
    else:
        problem = VariationalProblem(
            s.a, s.L, s.bcs, coefficients=s.bindings, spaces=[s.V, s.V], method=opts["method"],
            precond=opts["precond"], rtol=opts["rtol"], atol=opts["atol"], maxit=opts["maxit"])
        u = problem.solve()
        u.name = "u"
        result = RunResult(u, "linear", problem.iterations)
    if output is not None:
        write_vtk(output, s.mesh, result.solution)
        result.outputs.append(str(output))
    return result


def _series_path(output, step):
    p = Path(output)
    return p.with_name(f"{p.stem}_{step:04d}{p.suffix or '.vtk'}")


def _run_transient(desc, s: Setup, opts, output) -> RunResult:
    """Theta-method time stepping; the forms hold one time step with the
    previous level ``u0``, the step ``k`` and (optionally) ``theta``."""
    tr = desc.transient
    holders = {**s.parsed.coefficients, **s.parsed.constants}
    if tr.previous not in holders:
        raise UnknownIdentifier(f"previous-step coefficient {tr.previous!r} not in the forms")
    V = s.V
    u0 = interpolate(_coefficient_value(desc, s.mesh, holders[tr.previous], tr.initial)
                     if not isinstance(tr.initial, numbers.Real) else float(tr.initial), V)
    u0.name = "u"
    bindings = dict(s.bindings)
    bindings[holders[tr.previous]] = u0
    if tr.step_name in holders:
        bindings[holders[tr.step_name]] = Constant(tr.dt, name=tr.step_name)
    if tr.theta_name in holders:
        bindings[holders[tr.theta_name]] = Constant(tr.theta, name=tr.theta_name)
    a = bind(s.a, bindings)
    L = bind(s.L, bindings)
    reuse = tr.reuse_matrix
    if reuse is None:
        reuse = u0 not in a.coefficients()
    method, precond = _auto_method(a, opts["method"], opts["precond"])
    nsteps = int(round(tr.t_end / tr.dt))
    if nsteps < 1 or abs(nsteps * tr.dt - tr.t_end) > 1e-9 * tr.t_end:
        raise SchemaMismatch(f"t_end={tr.t_end} is not a whole number of steps dt={tr.dt}")
    result = RunResult(u0, "transient", matrix_reused=bool(reuse))
    n = V.dim()
    mask, g = collect_bcs(s.bcs, n)
    dofs = np.nonzero(mask)[0]
    A = lift = None
    if reuse:
        lift = Vector(n)
        A = assemble(a, spaces=[V, V], bc_data=(mask, g), lift=lift)
        if len(dofs):
            A.data[A.locate(dofs, dofs)] = 1.0
    t = 0.0
    for step in range(1, nsteps + 1):
        t = step * tr.dt
        if reuse:
            b = assemble(L, spaces=[V])
            b.array += lift.array
            b.array[dofs] = g[dofs]
        else:
            A, b = assemble_system(a, L, s.bcs, spaces=[V, V])
        x, its = solve_linear(A, b, method=method, precond=precond, rtol=opts["rtol"],
                              atol=opts["atol"], maxit=opts["maxit"], x0=u0.array)
        u0.array[:] = x
        result.iterations += its
        result.times.append(t)
        log.info("step %d  t=%.6g  %s iterations %d", step, t, method, its)
        if output is not None and (step % max(1, tr.output_every) == 0 or step == nsteps):
            path = _series_path(output, step)
            write_vtk(path, s.mesh, u0, title=f"femkit output t={t:.17g}")
            result.outputs.append(str(path))
    result.steps = nsteps
    return result


__all__ = [
    "BCSpec", "PROBLEM_SCHEMA", "ProblemDescriptor", "RunResult", "SolverOptions",
    "TransientOptions", "build_mesh", "compile_predicate", "load_problem", "problem_from_dict",
    "run_problem", "setup_problem",
]
