"""Exception hierarchy.

Every failure raised by the package derives from :class:`ScalarFlatError` so
callers (notably the CLI) can name the failing stage without catching
unrelated exceptions.
"""


class ScalarFlatError(Exception):
    """Base class for all package errors."""


class NonPositiveConformalFactor(ScalarFlatError, ValueError):
    pass


class GridMismatch(ScalarFlatError, ValueError):
    pass


class InsufficientSamples(ScalarFlatError, ValueError):
    pass


class NonMonotoneVolume(ScalarFlatError, ValueError):
    pass


class InvalidResolution(ScalarFlatError, ValueError):
    pass


class CutOutOfRange(ScalarFlatError, ValueError):
    pass


class IncompatibleGrids(ScalarFlatError, ValueError):
    pass


class UnsupportedModel(ScalarFlatError, ValueError):
    pass


class SingularSystem(ScalarFlatError, ArithmeticError):
    pass


class NoConvergence(ScalarFlatError, ArithmeticError):
    pass


class NotConverged(NoConvergence):
    """Raised by outer loops; carries the history accumulated so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class HopfViolated(ScalarFlatError, ArithmeticError):
    pass


class PositivityRequired(ScalarFlatError, ValueError):
    pass


class BracketingFailed(ScalarFlatError, ArithmeticError):
    pass


class MonotonicityViolated(ScalarFlatError, ArithmeticError):
    def __init__(self, step, magnitude, kind="monotonicity"):
        super().__init__(f"{kind} violated at step {step} by {magnitude:.3e}")
        self.step = step
        self.magnitude = magnitude
        self.kind = kind


class PositivityLost(ScalarFlatError, ArithmeticError):
    pass


class WrongExponent(ScalarFlatError, ValueError):
    pass


class UnsupportedPuncture(ScalarFlatError, ValueError):
    pass


class NonPositiveWeights(ScalarFlatError, ValueError):
    pass


class ParseError(ScalarFlatError, ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ValidationError(ScalarFlatError, ValueError):
    """One or more invalid configuration fields.

    ``errors`` is a list of ``(field, reason)`` pairs, all problems found.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{f}: {r}" for f, r in self.errors))
