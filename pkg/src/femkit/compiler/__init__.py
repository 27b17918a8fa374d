"""Form compiler: quadrature rules and element kernels."""
from femkit.compiler.kernel import (IR_SCHEMA, REFERENCE_P1_MASS, REFERENCE_P1_STIFFNESS, Kernel,
                                    compile_form, compile_integral, emit_kernel_ir, load_kernel_ir,
                                    tabulate_tensor)
from femkit.compiler.quadrature import QuadratureRule, facet_rule, map_facet_points, quadrature_rule

__all__ = [
    "IR_SCHEMA", "Kernel", "QuadratureRule", "REFERENCE_P1_MASS", "REFERENCE_P1_STIFFNESS",
    "compile_form", "compile_integral", "emit_kernel_ir", "facet_rule", "load_kernel_ir",
    "map_facet_points", "quadrature_rule", "tabulate_tensor",
]
