"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class GCGPError(Exception):
    pass


class ValidationError(GCGPError, ValueError):
    """Malformed input: bad shapes, asymmetric adjacency, missing files."""


class DatasetError(ValidationError):
    pass


class NumericalError(GCGPError, ArithmeticError):
    """A computation produced non-finite values or could not be completed."""

    def __init__(self, message, stage=None, step=None):
        super().__init__(message)
        self.stage = stage
        self.step = step


class SingularKernelError(NumericalError):
    """Cholesky factorization failed even after jitter escalation."""

    def __init__(self, message, indices=()):
        super().__init__(message, stage="cholesky")
        self.indices = tuple(int(i) for i in indices)
