"""File formats and problem descriptors."""
from femkit.io.problem import (BCSpec, PROBLEM_SCHEMA, ProblemDescriptor, RunResult, SolverOptions,
                               TransientOptions, build_mesh, compile_predicate, load_problem,
                               problem_from_dict, run_problem, setup_problem)
from femkit.io.vtk import VTK_CELL_TYPES, vertex_values, vtk_text, write_vtk
from femkit.io.xmlfile import (mesh_xml, read_mesh_xml, read_meshfunction_xml, read_vector_xml,
                               write_mesh_xml, write_meshfunction_xml, write_vector_xml)

__all__ = [
    "BCSpec", "PROBLEM_SCHEMA", "ProblemDescriptor", "RunResult", "SolverOptions",
    "TransientOptions", "VTK_CELL_TYPES", "build_mesh", "compile_predicate", "load_problem",
    "mesh_xml", "problem_from_dict", "read_mesh_xml", "read_meshfunction_xml", "read_vector_xml",
    "run_problem", "setup_problem", "vertex_values", "vtk_text", "write_mesh_xml",
    "write_meshfunction_xml", "write_vector_xml", "write_vtk",
]
