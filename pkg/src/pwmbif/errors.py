"""Exception hierarchy shared by all modules."""


class PwmbifError(Exception):
    """Base class for library errors."""


class NumericalError(PwmbifError):
    """A numerical routine failed to produce a trustworthy answer."""


class ConvergenceError(NumericalError):
    pass


class SingularJacobianError(NumericalError):
    pass


class NoBracketError(NumericalError, ValueError):
    """The function does not change sign over the supplied bracket."""


class GrazingError(NumericalError):
    """The stage-1 flow meets the ramp tangentially; the switching
    sensitivity is undefined."""


class NonSmoothPointError(NumericalError):
    """The discrete duty law sits exactly on a limiter kink."""


class DivergenceError(NumericalError):
    pass


class NoOrbitError(NumericalError):
    """No periodic orbit could be located from the attempted guesses."""

    def __init__(self, message, attempts=()):
        super().__init__(message)
        self.attempts = list(attempts)


class DocumentError(PwmbifError, ValueError):
    """A converter document failed validation."""
