"""Exception and warning types shared across the package."""


class SemsenseError(Exception):
    """Base class for all package errors."""


class InvalidScenario(SemsenseError):
    """Scenario or generator inputs are structurally invalid."""


class InsufficientAntennas(SemsenseError):
    """Phase cancellation needs at least two antennas."""


class InvalidCutoff(SemsenseError):
    """Component-split cutoff outside (0, Nyquist)."""


class GridMismatch(SemsenseError):
    """Tensors passed to one EM step do not share a shape/grid."""


class InvalidGrid(SemsenseError):
    """A parameter search grid is empty or not ascending."""


class ShapeError(SemsenseError):
    """Model/dataset collections disagree in length or dimension."""


class NoData(SemsenseError):
    """An operation that needs samples received an empty dataset."""


class LearningRateTooLarge(SemsenseError):
    """Local learning rate violates the aggregation-weight bound."""


class DivergenceError(SemsenseError):
    """Training objective blew up; carries the trace recorded so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class InsufficientPairs(SemsenseError):
    """Mapper fitting needs at least two (semantics, model) pairs."""


class ArchMismatch(SemsenseError):
    """Model parameter vectors come from different architectures."""


class ConfigError(SemsenseError):
    """Configuration file is malformed or contains unknown keys."""


class AliasingWarning(UserWarning):
    """A Doppler shift is at or beyond the packet-rate Nyquist limit."""


class ConvergenceWarning(UserWarning):
    """An iterative procedure hit its sweep cap before settling."""
