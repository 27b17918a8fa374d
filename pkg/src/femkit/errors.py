"""Exception hierarchy shared by all femkit modules."""


class FemkitError(Exception):
    """Base class for every error raised by femkit."""


# mesh
class IndexOutOfRange(FemkitError, IndexError):
    pass


class DimensionOutOfRange(FemkitError, ValueError):
    pass


class DegenerateCell(FemkitError, ValueError):
    pass


class InvalidDivisions(FemkitError, ValueError):
    pass


class NonManifold(FemkitError, ValueError):
    pass


class Unsupported(FemkitError, NotImplementedError):
    pass


# element
class UnsupportedFamily(FemkitError, ValueError):
    pass


class BadDegree(FemkitError, ValueError):
    pass


class PointOutsideReference(FemkitError, ValueError):
    pass


# dofmap / function
class ShapeMismatch(FemkitError, ValueError):
    pass


class PointNotInMesh(FemkitError, ValueError):
    pass


class NotMixed(FemkitError, TypeError):
    pass


# form language
class FormSyntaxError(FemkitError, SyntaxError):
    """Syntax error in a form file or expression string, with position."""

    def __init__(self, message, line=None, col=None):
        self.message = message
        self.line = line
        self.col = col
        where = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(message + where)

    def __str__(self):
        where = f" (line {self.line}, col {self.col})" if self.line is not None else ""
        return self.message + where


class UnknownIdentifier(FemkitError, NameError):
    pass


class UnrestrictedInteriorFacet(FemkitError, ValueError):
    pass


class MixedRanks(FemkitError, ValueError):
    pass


class NotMultilinear(FemkitError, ValueError):
    pass


class NonlinearInTrial(FemkitError, ValueError):
    pass


class EmptyBilinear(FemkitError, ValueError):
    pass


class UnsupportedNode(FemkitError, ValueError):
    pass


class BadComponentCount(FemkitError, ValueError):
    pass


# compiler
class DegreeOutOfRange(FemkitError, ValueError):
    pass


class UnsupportedExpression(FemkitError, ValueError):
    pass


# linear algebra
class MissingPattern(FemkitError, ValueError):
    pass


class OutsidePattern(FemkitError, IndexError):
    pass


class NoConvergence(FemkitError, RuntimeError):
    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message or f"no convergence after {iterations} iterations "
                         f"(residual {residual:.3e})")


class SingularMatrix(FemkitError, ArithmeticError):
    pass


# assembly
class UnboundCoefficient(FemkitError, ValueError):
    pass


class MeshMismatch(FemkitError, ValueError):
    pass


class MissingDiagonal(FemkitError, ValueError):
    pass


class NewtonNoConvergence(FemkitError, RuntimeError):
    def __init__(self, iterations, history):
        self.iterations = iterations
        self.history = list(history)
        super().__init__(f"Newton did not converge in {iterations} iterations "
                         f"(residual history {[f'{r:.3e}' for r in self.history]})")


class UnsupportedKind(FemkitError, ValueError):
    pass


class EmptyBoundary(UserWarning):
    """Warning: a Dirichlet condition selects no degrees of freedom."""


# io
class ParseError(FemkitError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"{message} (line {line})")


class SchemaMismatch(FemkitError, ValueError):
    pass


class IoError(FemkitError, OSError):
    pass
