"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented precondition or normalization."""


class NumericalAbort(RuntimeError):
    """Raised when a run leaves its validity domain (gate / positivity).

    Carries an optional ``state_dump`` attribute with the offending objects so
    the harness can serialize them next to the run outputs.
    """

    def __init__(self, message, state_dump=None, t=None):
        super().__init__(message)
        self.state_dump = state_dump
        self.t = t
