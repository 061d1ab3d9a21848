"""Exception types shared across the package."""


class NumericError(ArithmeticError):
    """A forward pass, gradient or update produced non-finite values."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class IllegalStateError(RuntimeError):
    """An operation was called on an object in the wrong state."""


class PreconditionError(RuntimeError):
    """A required input (checkpoint, expert, ...) is missing or unusable."""
