"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    """Raised when an input violates a shape, range or topology precondition."""


class TrainingDiverged(RuntimeError):
    """Raised when a training loss becomes non-finite."""
