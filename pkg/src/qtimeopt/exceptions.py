"""Exception types shared across the package."""


class DegenerateCostateError(ValueError):
    """The costate overlap vanished, so no control direction is defined."""


class DegenerateRecordError(ValueError):
    """A multiplier record has (numerically) zero mean, so a relative
    spread is meaningless."""


class DecompositionInconsistencyError(ValueError):
    """The low-weight part of the costate bilinear does not match
    lambda * H, i.e. the state is not a stationary point."""


class InsufficientDataError(ValueError):
    """Not enough usable points for the requested fit."""


class FitConvergenceError(RuntimeError):
    """Iterative fit failed to converge; carries the best iterate found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
