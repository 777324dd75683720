"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A numerical procedure (fit, root find) failed to converge."""
