"""
Exception hierarchy for mixclus

Recoverable numeric events are logged as warnings by the module that meets
them; the classes below are raised only when a computation cannot go on.
"""

from typing import Optional


class MixclusError(Exception):
    """Base class for every mixclus failure"""
    pass


class SchemaError(MixclusError):
    """Raised when a schema document is malformed or inconsistent"""
    pass


class DataError(MixclusError):
    """Raised when a data table does not match its schema"""
    pass


class ArchitectureError(MixclusError):
    """Raised when an architecture or a selection decision is invalid"""
    pass


class LinkError(MixclusError):
    """Raised on invalid codes or cut-points given to a link function"""
    pass


class ConfigError(MixclusError):
    """Raised when a run or fit configuration is invalid"""
    pass


class NumericalError(MixclusError):
    """
    Raised when a numerical routine meets a degenerate quantity

    Carries the failing operation and, inside the training loop, the
    iteration at which it failed.
    """

    def __init__(self, message: str, operation: str = "", iteration: Optional[int] = None):
        self.detail = message
        self.operation = operation
        self.iteration = iteration
        prefix = operation or "numerical"
        if iteration is not None:
            prefix = f"{prefix} (iteration {iteration})"
        super().__init__(f"{prefix}: {message}")

    def at_iteration(self, iteration: int) -> "NumericalError":
        """Same failure, tagged with the training iteration"""
        return NumericalError(self.detail, operation=self.operation, iteration=iteration)
