"""Exception types shared across the package."""


class AQImputeError(Exception):
    """Base class for all package errors."""


class OutOfBounds(AQImputeError):
    """A coordinate or index falls outside the grid."""


class FileUnreadable(AQImputeError):
    pass


class SchemaMismatch(AQImputeError):
    pass


class EmptyInput(AQImputeError):
    pass


class InfeasibleConfig(AQImputeError):
    pass


class SpecMismatch(AQImputeError):
    pass


class TooShort(AQImputeError):
    pass


class TooSparse(AQImputeError):
    pass


class NegativeConcentration(AQImputeError, ValueError):
    pass


class NoStations(AQImputeError):
    pass


class TooFewRows(AQImputeError):
    pass


class EmptyClass(AQImputeError):
    pass


class ShapeMismatch(AQImputeError, ValueError):
    pass


class EmptyTrain(AQImputeError):
    pass


class NotFitted(AQImputeError):
    pass


class AllMasked(AQImputeError):
    pass


class StepOutOfRange(AQImputeError, IndexError):
    pass


class LengthMismatch(AQImputeError, ValueError):
    pass


class StageOrderError(AQImputeError):
    """A pipeline stage ran before the stage that produces its inputs."""
