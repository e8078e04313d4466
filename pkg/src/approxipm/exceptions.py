"""Exception types raised by the solver library."""


class ApproxIPMError(Exception):
    """Base class for all library errors."""


class ValidationError(ApproxIPMError, ValueError):
    pass


class CrossedBounds(ValidationError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"lower bound is not strictly below upper bound at index {index}")


class AsymmetricHessian(ValidationError):
    def __init__(self, i: int, j: int, delta: float):
        self.i, self.j, self.delta = i, j, delta
        super().__init__(f"Hessian is not symmetric: |H[{i},{j}] - H[{j},{i}]| = {delta:g}")


class ProblemFormatError(ApproxIPMError, ValueError):
    """Malformed problem file. ``line`` is 1-based, or None for end of input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class NonInterior(ApproxIPMError):
    def __init__(self, index: int, what: str = "gap"):
        self.index = index
        super().__init__(f"iterate is not strictly interior at index {index} ({what})")


class IndefiniteSystem(ApproxIPMError):
    """Factorization of a condensed (Schur complement) matrix failed."""


class IndefiniteReduced(IndefiniteSystem):
    """Factorization of the reduced inactive-set matrix failed."""


class ZeroDenominator(ApproxIPMError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"vanishing diagonal denominator at index {index}")


class DegenerateStep(ApproxIPMError):
    """A fraction-to-boundary step lost strict interiority in floating point."""


class InitFailure(ApproxIPMError):
    pass


class GenerationFailure(ApproxIPMError):
    pass


class InsufficientData(ApproxIPMError, ValueError):
    pass


class PathFollowingFailure(ApproxIPMError):
    """Newton steps could not bring ||F_mu|| below mu within the allowed count."""
