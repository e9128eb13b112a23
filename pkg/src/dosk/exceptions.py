"""Exception hierarchy for the dosk package."""


class DoskError(Exception):
    """Base class for all errors raised by dosk."""


class DimensionError(DoskError, ValueError):
    """Array shapes do not agree."""

    def __init__(self, message, *, lengths=None):
        super().__init__(message)
        self.lengths = lengths


class LabelError(DoskError, ValueError):
    """Labels are not in {+1, -1} where a margin loss requires it."""


class DataError(DoskError, ValueError):
    """Input data is empty, non-finite or otherwise unusable."""


class ConvergenceError(DoskError, RuntimeError):
    """An inner solver hit its iteration cap.

    The last iterate and the achieved residual are attached so callers can
    decide whether to keep going with them.
    """

    def __init__(self, message, *, iterate=None, residual=None, iterations=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
        self.iterations = iterations


class SolverError(DoskError, RuntimeError):
    """The outer optimization produced a non-finite objective."""

    def __init__(self, message, *, trace=None):
        super().__init__(message)
        self.trace = trace


class ModelFormatError(DoskError, ValueError):
    """A serialized model file is malformed or has the wrong version."""

    def __init__(self, message, *, field=None):
        super().__init__(message)
        self.field = field
