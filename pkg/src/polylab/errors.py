"""Exception hierarchy shared by the polylab modules."""


class PolylabError(Exception):
    """Base class for every error raised by polylab."""


class InvalidSpec(PolylabError, ValueError):
    pass


class NonpositiveU(PolylabError, ArithmeticError):
    """The negative-power nonlinearity was evaluated at u <= 0.

    Signals extinction of the trajectory, not a programming error.
    """


class NonfiniteState(PolylabError, ArithmeticError):
    pass


class BadRadius(PolylabError, ValueError):
    pass


class OutOfRange(PolylabError, ValueError):
    pass


class TailNotIntegrable(PolylabError, ArithmeticError):
    pass


class BracketFailure(PolylabError):
    pass


class IndeterminateShot(PolylabError):
    """A shot inside a bisection could not be classified."""

    def __init__(self, beta, termination):
        super().__init__(f"shot at beta={beta!r} ended with {termination}")
        self.beta = beta
        self.termination = termination


class NotSeparatrix(PolylabError, ValueError):
    pass


class NotSurvived(PolylabError, ValueError):
    pass


class ConfigError(PolylabError, ValueError):
    pass
