"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class ConfigurationError(ValueError):
    """A problem instance or run configuration is invalid."""


class SlaterError(ValueError):
    """A Slater certificate cannot produce a dual bound."""


class NonConvergenceError(RuntimeError):
    """An iterative routine hit its iteration cap.

    The last estimate is kept on ``estimate``.
    """

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate
