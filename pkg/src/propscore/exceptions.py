"""Exception types raised by propscore."""


class PropscoreError(Exception):
    """Base class for every error raised by this package."""


class BoundaryError(PropscoreError, ValueError):
    """A generator gradient is undefined at the requested point."""


class DatasetError(PropscoreError, ValueError):
    """Malformed or invalid prediction data.

    ``line`` is the 1-based line number in the source file when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"parse error line {line}: {message}"
        super().__init__(message)


class DegenerateTestError(PropscoreError, ValueError):
    """A significance test cannot be computed on the given sample.

    ``direction`` carries the common sign of the differences when one
    exists (``"a_lower"``, ``"b_lower"`` or ``"tie"``).
    """

    def __init__(self, message, direction="tie"):
        self.direction = direction
        super().__init__(message)


class InfiniteLossError(PropscoreError, ValueError):
    """A paired sample contains an infinite loss."""


class ConvergenceError(PropscoreError, ArithmeticError):
    """An iterative special-function evaluation failed to converge."""
