"""Reference finite elements."""
from femkit.element.finite_element import (MAX_DEGREE, CompoundElement, CrouzeixRaviartElement,
                                           ElementDescriptor, FiniteElement, LagrangeElement,
                                           MixedElement, VectorElement, create_element,
                                           reference_dof_layout, tabulate_basis)

__all__ = [
    "MAX_DEGREE", "CompoundElement", "CrouzeixRaviartElement", "ElementDescriptor",
    "FiniteElement", "LagrangeElement", "MixedElement", "VectorElement", "create_element",
    "reference_dof_layout", "tabulate_basis",
]
