"""Exception hierarchy shared by all hopflab modules."""


class HopfLabError(Exception):
    """Base class for every error raised by hopflab."""


class DomainError(HopfLabError, ValueError):
    """An argument lies outside the set where the operation is defined."""


class DivergenceError(HopfLabError, ArithmeticError):
    """An integral that the operation needs is infinite.

    Raised for Dini integrals of non-Dini moduli and for drift functionals
    of non-admissible drifts.
    """


class InvariantViolation(HopfLabError, ValueError):
    """A descriptor failed one of its declared invariants."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)


class UnsupportedFamilyError(HopfLabError, TypeError):
    """The descriptor family is not handled by the requested operation."""


class GeometryError(HopfLabError, ValueError):
    """The mesh does not contain the geometric feature the operation needs."""


class ConvergenceError(HopfLabError, RuntimeError):
    """A linear solve did not reach its residual target.

    Attributes
    ----------
    residual : float
        Relative residual reached when the solver gave up.
    """

    def __init__(self, msg, residual):
        super().__init__(f"{msg} (relative residual {residual:.3e})")
        self.residual = residual
