"""The variational form language."""
from femkit.form.algorithms import (FormMetadata, action, check_form, derivative, estimate_degree,
                                    expand, is_symmetric, lhs, lhs_rhs, replace_form, rhs)
from femkit.form.expr import (Argument, CellSize, Coefficient, Constant, Expr, FacetNormal,
                              Identity, PointCoefficient, SpatialCoordinate, Zero, abs_, as_matrix,
                              as_vector, avg, cos, dot, exp, grad, inner, jump, outer, replace, sin,
                              sqrt, trace)
from femkit.form.expr import div_ as div
from femkit.form.form import Form, Integral, Measure, dS, ds, dx
from femkit.form.parser import (ParsedForms, evaluate_spatial, parse_expression, parse_form_file,
                                split_argument)

tr = trace

__all__ = [
    "Argument", "CellSize", "Coefficient", "Constant", "Expr", "FacetNormal", "Form",
    "FormMetadata", "Identity", "Integral", "Measure", "ParsedForms", "PointCoefficient",
    "SpatialCoordinate", "Zero", "abs_", "action", "as_matrix", "as_vector", "avg", "check_form",
    "cos", "dS", "derivative", "div", "dot", "ds", "dx", "estimate_degree", "evaluate_spatial",
    "exp", "expand", "grad", "inner", "is_symmetric", "jump", "lhs", "lhs_rhs", "outer",
    "parse_expression", "parse_form_file", "replace", "replace_form", "rhs", "sin",
    "split_argument", "sqrt", "tr", "trace",
]
