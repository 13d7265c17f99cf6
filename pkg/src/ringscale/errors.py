"""Exception hierarchy shared across the package.

``ValidationError`` covers bad input (CLI exit code 1); ``RuntimeFailure``
covers failures while running a collective or a training job (exit code 2).
"""


class ValidationError(ValueError):
    pass


class Oversubscription(ValidationError):
    pass


class NumaMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class NonPositiveTime(ValidationError):
    pass


class EmptyField(ValidationError):
    pass


class RuntimeFailure(RuntimeError):
    pass


class PeerUnreachable(RuntimeFailure):
    def __init__(self, rank, message=""):
        self.rank = rank
        super().__init__(f"rank {rank} unreachable" + (f": {message}" if message else ""))


class ReplicaDivergence(RuntimeFailure):
    pass
