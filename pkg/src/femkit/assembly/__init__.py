"""Assembly, boundary conditions and variational solvers."""
from femkit.assembly.assemble import assemble, bind, compiled_kernels, element_tensors
from femkit.assembly.bcs import (DirichletBC, DomainBoundary, apply_bc, bc_dofs, collect_bcs,
                                 create_bc, near)
from femkit.assembly.solvers import (VariationalProblem, assemble_system, compute_norm, errornorm,
                                     norm, solve_linear_problem, solve_linear_vp, solve_newton_vp,
                                     solve_nonlinear_problem)

__all__ = [
    "DirichletBC", "DomainBoundary", "VariationalProblem", "apply_bc", "assemble",
    "assemble_system", "bc_dofs", "bind", "collect_bcs", "compiled_kernels", "compute_norm",
    "create_bc", "element_tensors", "errornorm", "near", "norm", "solve_linear_problem",
    "solve_linear_vp", "solve_newton_vp", "solve_nonlinear_problem",
]
