"""Exception types raised across the package."""


class PceError(Exception):
    """Base class for all package errors."""


class UnsupportedDistributionError(PceError, ValueError):
    pass


class ShapeError(PceError, ValueError):
    pass


class MissingWeightsError(PceError, ValueError):
    pass


class IllPosedDesignError(PceError, ValueError):
    pass


class DomainError(PceError, ValueError):
    pass


class DivergenceError(PceError, ArithmeticError):
    """Integration produced a non-finite state.

    ``time`` is the time of the step that failed; ``node`` the collocation
    node (or sample) index when known.
    """

    def __init__(self, message, time=None, node=None):
        super().__init__(message)
        self.time = time
        self.node = node


class InvalidStartError(PceError, ValueError):
    pass


class EmptyEnsembleError(PceError, ValueError):
    pass
