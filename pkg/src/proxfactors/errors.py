"""Exception types shared across the package.

The CLI maps :class:`InputError` to exit code 2 and :class:`NumericalError`
to exit code 3.
"""


class InputError(ValueError):
    """Malformed input data, bad arguments or violated preconditions."""


class NumericalError(ArithmeticError):
    """Singular systems, non-convergence and other numerical failures."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BoundUnattainableError(NumericalError):
    """No admissible parameter reaches the requested bound."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
