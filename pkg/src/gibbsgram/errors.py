"""Exception hierarchy shared by all modules."""


class GibbsGramError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GibbsGramError, ValueError):
    """Invalid model, schedule, noise or run configuration."""


class NumericError(GibbsGramError, ArithmeticError):
    """A numerical procedure produced non-finite or unusable values."""


class DivergenceError(NumericError):
    """An ensemble path left the finite region during integration."""

    def __init__(self, path, time, last_state, message=None):
        self.path = path
        self.time = time
        self.last_state = last_state
        if message is None:
            message = (f"path {path} diverged at t={time:.6g}; "
                       f"last finite state {list(map(float, last_state))}")
        super().__init__(message)


class DomainTooSmallError(NumericError):
    """Probability mass escaped the computational box."""


class TimeLookupError(GibbsGramError, LookupError):
    """A requested time is not part of a snapshot schedule."""
