"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class NumericFailureError(RuntimeError):
    """Raised when an iterative method hits an unrecoverable numerical state.

    Carries a ``diagnostics`` dict with whatever state is useful post mortem.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class OutOfBallError(InvalidInputError):
    """Query point left the ball in which a local oracle is valid."""


class ContractViolationError(RuntimeError):
    """A subroutine's output violated a bound its caller was promised."""


class BudgetExhaustedError(RuntimeError):
    """Raised by an armed query counter when a hard query cap is hit."""
