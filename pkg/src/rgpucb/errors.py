"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's preconditions."""


class InvalidParameterError(InvalidInputError):
    """Raised for distribution or schedule parameters outside their domain."""


class IllConditionedKernelError(ArithmeticError):
    """Raised when a kernel matrix cannot be Cholesky-factorised.

    ``pivot`` is the zero-based index of the first non-positive pivot, and
    ``iteration`` is filled in by the BO loop when the failure happens
    mid-run.
    """

    def __init__(self, message, pivot=None, iteration=None):
        super().__init__(message)
        self.pivot = pivot
        self.iteration = iteration


class DegenerateQuantileError(ArithmeticError):
    """Raised when a quantile needed as a divisor evaluates to zero."""


class InternalConsistencyError(RuntimeError):
    """Raised when a numerical result is outside its admissible range by
    more than round-off can explain."""
