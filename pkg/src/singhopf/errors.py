"""Exception hierarchy shared by all modules."""


class SingHopfError(Exception):
    """Base class; ``data`` carries whatever partial result was available."""

    def __init__(self, message: str = "", data=None):
        super().__init__(message)
        self.data = data


class DomainError(SingHopfError, ValueError):
    pass


class ParameterMismatchError(SingHopfError, TypeError):
    pass


class PreconditionError(SingHopfError, ValueError):
    pass


class StiffnessError(SingHopfError):
    """Step size underflow; ``data`` holds the last state reached."""


class NoEquilibrium(SingHopfError):
    pass


class DegenerateContinuum(SingHopfError):
    pass


class NoSaddleNode(SingHopfError):
    pass


class NotFound(SingHopfError):
    pass


class NotConverged(SingHopfError):
    pass


class NoReturn(SingHopfError):
    pass


class BranchTerminated(SingHopfError):
    pass


class BracketError(SingHopfError):
    pass


class UndecidedError(SingHopfError):
    pass


class CurveTerminated(SingHopfError):
    pass


class NoHit(SingHopfError):
    pass


class DegenerateB(SingHopfError, ValueError):
    pass
