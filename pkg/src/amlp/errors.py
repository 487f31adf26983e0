"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed input: bad indices, shape mismatches, broken file formats."""


class NumericalError(RuntimeError):
    """Numerical failure, e.g. a non-finite loss during training."""
