"""Exception hierarchy shared by all modules."""


class CwscError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CwscError, ValueError):
    """Argument outside the domain of a function, e.g. |t| >= 1."""


class ParameterError(CwscError, ValueError):
    """Model parameters that the requested object cannot be built for."""


class ContractError(CwscError, ValueError):
    """Input violating a structural precondition (shape, symmetry, disjointness)."""


class CapacityError(CwscError, ValueError):
    """Exact computation requested beyond its supported size."""


class NumericError(CwscError, ArithmeticError):
    """A numerical routine failed to converge."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics

    def __str__(self):
        base = super().__str__()
        if not self.diagnostics:
            return base
        extra = ", ".join(f"{k}={v!r}" for k, v in sorted(self.diagnostics.items()))
        return f"{base} ({extra})"


class UsageError(CwscError, ValueError):
    """Invalid configuration or command-line usage."""
