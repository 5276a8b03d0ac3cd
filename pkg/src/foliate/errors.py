"""Exception types shared across the package."""


class FoliateError(Exception):
    """Base class for all package-specific errors."""


class DegreeError(FoliateError, ValueError):
    """A form/cochain degree is out of range or incompatible with the operation."""


class MetricError(FoliateError, ValueError):
    """A metric tensor is not symmetric positive definite."""


class DegenerateFormError(FoliateError, ValueError):
    """A 2-form vanishes (below threshold) where the construction needs it nonzero."""


class TangencyError(FoliateError, ValueError):
    """A vector is not tangent to the leaf plane within tolerance."""


class SingularityError(FoliateError, ValueError):
    """An analytic field was evaluated at or too close to a declared singularity."""


class ParameterError(FoliateError, ValueError):
    """Invalid user-supplied parameter (radii, subdivision counts, levels, ...)."""


class MeshValidationError(FoliateError, ValueError):
    """A mesh violates structural invariants (inverted tets, bad incidence)."""


class MeshQualityError(FoliateError, ValueError):
    """Dual measures could not be made positive for some simplex."""


class ParseError(FoliateError, ValueError):
    """Malformed mesh/cochain text input; carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CycleError(FoliateError, ValueError):
    """A chain expected to be a cycle has nonzero boundary."""


class CompatibilityError(FoliateError, ValueError):
    """Right-hand side not orthogonal to the kernel / mass balance violated."""


class ConvergenceError(FoliateError, RuntimeError):
    """An iterative solver failed to reach the requested tolerance."""


class DecompositionError(FoliateError, RuntimeError):
    """Hodge decomposition failed; carries the solver report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
