"""Exception hierarchy shared by all modules.

Every error raised by the library derives from :class:`ForecastError`, which
lets the CLI map whole families of failures onto exit codes.
"""


class ForecastError(Exception):
    """Base class for library errors."""


class IngestError(ForecastError):
    """Problems reading or validating input bar data."""


class ComputationError(ForecastError):
    """Numerical preconditions violated or a computation failed."""


# wavelet
class SeriesTooShort(ComputationError, ValueError):
    pass


class InvalidLevels(ComputationError, ValueError):
    pass


class ShapeMismatch(ComputationError, ValueError):
    pass


# ssa
class EmbeddingTooLarge(ComputationError, ValueError):
    pass


class EmptySelection(ComputationError, ValueError):
    pass


class IndexOutOfRange(ComputationError, IndexError):
    pass


# lagstats
class LagTooLarge(ComputationError, ValueError):
    pass


class DegenerateSeries(ComputationError, ValueError):
    pass


# lstm
class NonFiniteInput(ComputationError, ValueError):
    pass


class StaleCache(ComputationError, RuntimeError):
    pass


class EmptyDataset(ComputationError, ValueError):
    pass


class DivergedLoss(ComputationError, FloatingPointError):
    pass


# metrics
class LengthMismatch(ComputationError, ValueError):
    pass


class EmptyInput(ComputationError, ValueError):
    pass


class ZeroActual(ComputationError, ZeroDivisionError):
    pass


# pipeline
class MissingColumn(IngestError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnparseableRow(IngestError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class NonMonotoneTimestamps(IngestError, ValueError):
    pass


class EmptyFile(IngestError, ValueError):
    pass


class SeriesTooShortForLag(ComputationError, ValueError):
    pass


class InsufficientData(ComputationError, ValueError):
    pass


class MismatchedRuns(ComputationError, ValueError):
    pass
