# Exceptions raised by coronaLab operations


class CoronaLabError(Exception):
    pass


class InvariantViolation(CoronaLabError):
    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class NoThinBall(CoronaLabError):
    pass


class ChainNotNonDoubling(CoronaLabError):
    pass


class NoCellSmallEnough(CoronaLabError):
    pass


class SingularPoint(CoronaLabError):
    pass


class BadTruncationOrder(CoronaLabError):
    pass


class UnknownDomain(CoronaLabError):
    pass


class NoInteriorPoint(CoronaLabError):
    pass


class MaxStepsExceeded(CoronaLabError):
    pass


class SingularPair(CoronaLabError):
    pass


class EmptyG0(CoronaLabError):
    pass


class EmptyProbeFamily(CoronaLabError):
    pass


class DepthExhausted(CoronaLabError):
    pass


class PreconditionFailed(CoronaLabError):
    """Raised when an operation's checked hypothesis does not hold.

    `hypothesis` names the violated condition so the CLI can report it.
    """

    def __init__(self, hypothesis, message=""):
        super().__init__(f"{hypothesis}: {message}" if message else hypothesis)
        self.hypothesis = hypothesis


class ConfigError(ValueError):
    pass
