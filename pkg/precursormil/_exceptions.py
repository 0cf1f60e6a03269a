from __future__ import annotations

from pathlib import Path


class PrecursorMilError(Exception):
    """Base exception for precursormil errors."""


# -- flight data -------------------------------------------------------------


class FlightDataError(PrecursorMilError):
    """Raised when raw flight files cannot be turned into records."""


class MissingColumn(FlightDataError):
    def __init__(self, name: str, file: str | Path | None = None) -> None:
        self.name = name
        self.file = str(file) if file is not None else None
        where = f' in `{self.file}`' if self.file else ''
        super().__init__(f'Required column `{name}` is missing{where}.')


class NonNumericCell(FlightDataError):
    def __init__(self, file: str | Path, row: int, col: str) -> None:
        self.file = str(file)
        self.row = row
        self.col = col
        super().__init__(
            f'Cell at row {row}, column `{col}` of `{self.file}` is not a finite number.'
        )


class EmptyFile(FlightDataError):
    def __init__(self, file: str | Path) -> None:
        self.file = str(file)
        super().__init__(f'File `{self.file}` holds no data rows.')


class InsufficientRange(FlightDataError):
    def __init__(self, flight_id: str, low: float, high: float) -> None:
        self.flight_id = flight_id
        self.low = low
        self.high = high
        super().__init__(
            f'Flight `{flight_id}` spans [{high:g}, {low:g}] nmi, '
            'which does not cover the [20, 0] nmi approach.'
        )


class NonMonotoneDistance(FlightDataError):
    def __init__(self, flight_id: str, index: int) -> None:
        self.flight_id = flight_id
        self.index = index
        super().__init__(
            f'Flight `{flight_id}` distance track reverses at sample {index}.'
        )


class LabelMismatch(FlightDataError):
    def __init__(self, flight_id: str, label: str, severity: int) -> None:
        self.flight_id = flight_id
        self.label = label
        self.severity = severity
        super().__init__(
            f'Flight `{flight_id}` has label `{label}` with severity {severity}; '
            'severity 0 is reserved for Nominal flights.'
        )


# -- feature selection -------------------------------------------------------


class FeatureSelectionError(PrecursorMilError):
    """Raised by the correlation based feature selection."""


class ZeroVariance(FeatureSelectionError):
    def __init__(self, feature: str) -> None:
        self.feature = feature
        super().__init__(f'Feature `{feature}` is constant over the pooled data.')


# -- engine ------------------------------------------------------------------


class EngineError(PrecursorMilError):
    """Raised by the tensor engine."""


class ShapeMismatch(EngineError):
    def __init__(self, what: str, expected: object, got: object) -> None:
        self.what = what
        self.expected = expected
        self.got = got
        super().__init__(f'{what}: expected shape {expected}, got {got}.')


class NonFiniteLoss(EngineError):
    def __init__(self, value: float) -> None:
        self.value = value
        super().__init__(f'Loss is not finite ({value!r}).')


class CheckpointError(EngineError):
    """Raised when a checkpoint file cannot be read back."""


# -- model -------------------------------------------------------------------


class ModelError(PrecursorMilError):
    """Raised while building or combining models."""


class ConfigInvalid(ModelError):
    def __init__(self, key: str, reason: str) -> None:
        self.key = key
        self.reason = reason
        super().__init__(f'Invalid value for `{key}`: {reason}')


class FeatureOrderMismatch(ModelError):
    def __init__(self, event: str) -> None:
        self.event = event
        super().__init__(
            f'Model for `{event}` was trained on a different feature list or length.'
        )


# -- training ----------------------------------------------------------------


class TrainingError(PrecursorMilError):
    """Raised while splitting data or training models."""


class ClassTooSmall(TrainingError):
    def __init__(self, label: str, count: int, minimum: int = 3) -> None:
        self.label = label
        self.count = count
        super().__init__(
            f'Class `{label}` has {count} flight(s); at least {minimum} are needed to split.'
        )


# -- evaluation --------------------------------------------------------------


class EvaluationError(PrecursorMilError):
    """Raised by metric computations."""


class UnknownClass(EvaluationError):
    def __init__(self, label: str) -> None:
        self.label = label
        super().__init__(f'Label `{label}` is not one of the evaluated classes.')


class UndefinedMetric(EvaluationError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f'Metric `{name}` is undefined (zero denominator).')


class FeatureSetMismatch(EvaluationError):
    def __init__(self, detail: str) -> None:
        super().__init__(f'Score tables do not cover the same flights/features: {detail}')


# -- precursor analysis ------------------------------------------------------


class PrecursorError(PrecursorMilError):
    """Raised by precursor score post-processing."""


class EmptyInput(PrecursorError):
    def __init__(self, what: str) -> None:
        super().__init__(f'No {what} to aggregate.')


class TooFewFlights(PrecursorError):
    def __init__(self, count: int, minimum: int = 2) -> None:
        self.count = count
        super().__init__(f'Need at least {minimum} nominal flights, got {count}.')


# -- synthetic data ----------------------------------------------------------


class SynthError(PrecursorMilError):
    """Raised by the synthetic corpus generator."""


class SpecInvalid(SynthError):
    def __init__(self, reason: str) -> None:
        super().__init__(f'Invalid synthetic corpus spec: {reason}')
