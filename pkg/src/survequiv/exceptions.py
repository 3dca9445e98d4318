"""Exception types raised by survequiv."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


class InputError(ValueError):
    """Data cannot be used for the requested operation (e.g. no events)."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (singular matrix, exhausted retry budget)."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition
