"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid preset or operation parameters."""


class EmptyDecompositionError(RuntimeError):
    """No dyadic cube fits inside the domain at the requested depth."""


class ConnectivityError(RuntimeError):
    """Face-neighbor graph is disconnected at this truncation level."""

    def __init__(self, message, component_sizes=None):
        super().__init__(message)
        self.component_sizes = list(component_sizes or [])


class StructureError(ValueError):
    """Tree does not have the structure required by the operation."""


class CompatibilityError(RuntimeError):
    """Constraint right-hand side is infeasible (nonzero mean)."""


class ConvergenceError(RuntimeError):
    """Linear solver failed to reach the requested residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual
