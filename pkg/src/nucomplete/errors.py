"""Exception hierarchy shared by every module."""


class NucompleteError(Exception):
    """Base class for all package errors."""


class DimensionError(NucompleteError, ValueError):
    """Operands have incompatible shapes."""


class DomainError(NucompleteError, ValueError):
    """An input lies outside the domain of the operation (zero divisor, negative weight, ...)."""


class SolverFailure(NucompleteError, RuntimeError):
    """A numerical routine did not converge or produced non-finite values."""


class DegenerateInputError(NucompleteError, ValueError):
    """The input carries no information to estimate from."""


class InfeasibleError(NucompleteError, ValueError):
    """The weight-construction program has an empty feasible set."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


class ConfigurationError(NucompleteError, ValueError):
    """Invalid configuration or a protocol step that cannot be carried out."""


class InsufficientDataError(NucompleteError, ValueError):
    """Too few data points for a statistical procedure."""
