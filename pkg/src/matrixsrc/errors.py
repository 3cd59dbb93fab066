"""Exception types shared across the package."""


class MatrixSRCError(Exception):
    """Base class for all errors raised by matrixsrc."""


class ContractError(MatrixSRCError, ValueError):
    """A function was called with arguments violating its preconditions."""


class ConfigError(MatrixSRCError, ValueError):
    """One or more configuration constraints are violated.

    ``problems`` holds every violated constraint, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(MatrixSRCError, ArithmeticError):
    """The integration produced non-finite values or an impossible network state."""

    def __init__(self, message, state=None, partial_trace=None):
        super().__init__(message)
        self.state = state
        self.partial_trace = partial_trace
