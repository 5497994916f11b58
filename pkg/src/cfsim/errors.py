"""Exception hierarchy shared by all cfsim modules.

The CLI maps these onto exit codes: ConfigError -> 2, NumericsError -> 3.
"""


class CfsimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(CfsimError):
    """Invalid configuration; names the violated field."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DomainError(CfsimError):
    """An operation was called with input outside its mathematical domain."""


class DegenerateInputError(CfsimError):
    """Structurally valid input that leaves an operation undefined (e.g. all-zero gains)."""


class AssociationError(CfsimError):
    """A user ended up without serving APs, or the serving map is inconsistent."""


class NumericsError(CfsimError):
    """Internal numerical failure (ill-conditioning, impossible negative denominator, ...)."""


class SolverError(CfsimError):
    """Power-control solver failed (infeasible anchor, inconsistent constraints)."""
