"""Command-line front end: ``femkit mesh|compile|solve``.

Exit codes: 0 success, 1 usage error, 2 runtime failure (diagnostic on stderr).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from femkit import __version__
from femkit.compiler.kernel import IR_SCHEMA, compile_integral
from femkit.errors import FemkitError, FormSyntaxError, NotMultilinear
from femkit.form import algorithms
from femkit.form.parser import FORM_NAMES, parse_form_file
from femkit.io import load_problem, read_mesh_xml, run_problem, write_mesh_xml
from femkit.mesh import exterior_facets, generate_unit_mesh, refine

log = logging.getLogger("femkit.cli")

LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _configure_logging():
    level = LOG_LEVELS.get(os.environ.get("FEMKIT_LOG", "quiet").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(name)s: %(message)s", stream=sys.stderr, force=True)


def build_parser():
    p = _Parser(prog="femkit", description="Finite element toolkit on simplex meshes.")
    p.add_argument("--version", action="version", version=f"femkit {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    m = sub.add_parser("mesh", help="generate, refine or describe meshes")
    msub = m.add_subparsers(dest="action", parser_class=_Parser)
    g = msub.add_parser("generate", help="unit interval/square/cube mesh")
    g.add_argument("shape", choices=["interval", "square", "cube"])
    g.add_argument("divisions", type=int, nargs="+")
    g.add_argument("--output", "-o", required=True)
    r = msub.add_parser("refine", help="uniform refinement")
    r.add_argument("mesh")
    r.add_argument("--output", "-o", required=True)
    r.add_argument("--times", type=int, default=1)
    i = msub.add_parser("info", help="entity counts and sizes")
    i.add_argument("mesh")

    c = sub.add_parser("compile", help="check a form file and emit kernel IR")
    c.add_argument("forms")
    c.add_argument("--emit-ir", dest="emit_ir", help="write kernel IR JSON here ('-' for stdout)")
    c.add_argument("--degree", type=int, help="override the estimated quadrature degree")

    s = sub.add_parser("solve", help="solve a problem descriptor")
    s.add_argument("problem")
    s.add_argument("--output", "-o", help="VTK output path")
    s.add_argument("--mesh", help="mesh XML file replacing the descriptor's mesh")
    s.add_argument("--solver", choices=["cg", "bicgstab", "lu"])
    s.add_argument("--rtol", type=float)
    s.add_argument("--maxit", type=int)
    s.add_argument("--threads", type=int, default=1, help="accepted for compatibility; assembly is serial")
    return p


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def _mesh_info(mesh):
    D = mesh.tdim
    counts = [mesh.num_entities(d) for d in range(D + 1)]
    euler = sum((-1) ** d * n for d, n in enumerate(counts))
    nb = int(exterior_facets(mesh).values.sum())
    return {"cell": mesh.cell_name, "tdim": D, "gdim": mesh.gdim, "entities": counts,
            "euler_characteristic": euler, "boundary_facets": nb,
            "hmin": mesh.hmin(), "hmax": mesh.hmax()}


def cmd_mesh(args):
    if args.action == "generate":
        mesh = generate_unit_mesh(args.shape, args.divisions)
        write_mesh_xml(mesh, args.output)
        print(f"wrote {args.output}: {mesh.num_vertices()} vertices, {mesh.num_cells()} cells")
    elif args.action == "refine":
        mesh = read_mesh_xml(args.mesh)
        for _ in range(args.times):
            mesh = refine(mesh)
        write_mesh_xml(mesh, args.output)
        print(f"wrote {args.output}: {mesh.num_vertices()} vertices, {mesh.num_cells()} cells")
    elif args.action == "info":
        info = _mesh_info(read_mesh_xml(args.mesh))
        for k, v in info.items():
            print(f"{k}: {v}")
    else:
        raise UsageError("femkit mesh: choose generate, refine or info")
    return 0


def compile_forms_ir(text: str, degree=None) -> dict:
    """Kernel IR for every form defined in a form file."""
    parsed = parse_form_file(text)
    forms_out = []
    names = [n for n in FORM_NAMES if n in parsed.forms]
    if not names:
        raise FemkitError(f"no form named {', '.join(FORM_NAMES)} is defined")
    for name in names:
        form = parsed.forms[name]
        try:
            meta = algorithms.check_form(form)
        except NotMultilinear:
            if name == "F" and ("a" in parsed.forms or "L" in parsed.forms):
                log.info("skipping F: intermediate form split by lhs/rhs")
                continue
            raise
        elems = [a.element for a in meta.arguments] + [c.element for c in meta.coefficients
                                                       if hasattr(c, "element")]
        tdim = elems[0].tdim if elems else parsed_tdim(parsed)
        kernels = []
        for group in algorithms.group_integrals(form).values():
            k = compile_integral(group, meta, tdim=tdim, gdim=tdim, degree=degree)
            ir = k.to_ir()
            ir["listing"] = k.pseudocode().split("\n")
            kernels.append(ir)
        forms_out.append({"name": name, "rank": meta.rank, "kernels": kernels})
    return {"schema": IR_SCHEMA, "forms": forms_out}


def parsed_tdim(parsed):
    for e in parsed.elements.values():
        return e.tdim
    raise FemkitError("cannot determine the cell of a form without elements")


def cmd_compile(args):
    path = Path(args.forms)
    text = path.read_text(encoding="utf-8")
    try:
        doc = compile_forms_ir(text, args.degree)
    except FormSyntaxError as exc:
        raise FemkitError(f"{path}:{exc.line}: {exc.message}") from exc
    nk = sum(len(f["kernels"]) for f in doc["forms"])
    payload = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if args.emit_ir == "-":
        sys.stdout.write(payload)
    elif args.emit_ir:
        with open(args.emit_ir, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    for f in doc["forms"]:
        kinds = ", ".join(k["kind"] for k in f["kernels"])
        print(f"form {f['name']}: rank {f['rank']}, kernels: {kinds}", file=sys.stderr
              if args.emit_ir == "-" else sys.stdout)
    if args.emit_ir != "-":
        print(f"{nk} kernel(s) compiled")
    return 0


def cmd_solve(args):
    desc = load_problem(args.problem)
    mesh = read_mesh_xml(args.mesh) if args.mesh else None
    if args.threads and args.threads > 1:
        log.info("--threads=%d requested; assembling serially", args.threads)
    res = run_problem(desc, output=args.output, mesh=mesh, method=args.solver, rtol=args.rtol,
                      maxit=args.maxit)
    if res.kind == "newton":
        print(f"Newton converged in {res.iterations} iterations "
              f"(residual {res.residuals[-1]:.3e})")
    elif res.kind == "transient":
        print(f"transient run: {res.steps} steps, {res.iterations} linear iterations, "
              f"matrix {'reused' if res.matrix_reused else 'reassembled'}")
    else:
        print(f"linear solve converged in {res.iterations} iterations")
    for p in res.outputs:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        if args.command == "mesh" and args.action is None:
            raise UsageError("femkit mesh: choose generate, refine or info")
        handler = {"mesh": cmd_mesh, "compile": cmd_compile, "solve": cmd_solve}[args.command]
        return handler(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (FemkitError, OSError, ValueError, KeyError) as exc:
        print(f"femkit: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
