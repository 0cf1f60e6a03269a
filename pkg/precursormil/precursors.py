'''
Precursor scores from a forward trace.

The raw score of feature i at step t is head i's sigmoid output; 0.5 is
neutral. The precursor window T holds the steps whose temporal score is
at or above the decision threshold, and the adjusted score of a feature
is its mean absolute deviation from 0.5 over T, bounded in [0, 0.5].
'''
from __future__ import annotations

import dataclasses as dc
import logging
from collections.abc import Sequence

import numpy as np

from precursormil._exceptions import EmptyInput, PrecursorError, TooFewFlights
from precursormil._model import DataclassMixin
from precursormil._types import FloatArray, IntArray
from precursormil.dataset import FlightDataset
from precursormil.flights import DISTANCE_GRID, NOMINAL
from precursormil.model import ForwardTrace, TrainedModel

logger = logging.getLogger(__name__)

NEUTRAL_SCORE = 0.5


@dc.dataclass(frozen=True)
class PrecursorReport(DataclassMixin):
    flight_id: str
    event: str
    feature_names: tuple[str, ...]
    raw_scores: FloatArray
    temporal_scores: FloatArray
    window: IntArray
    window_found: bool
    adjusted: FloatArray
    signed: FloatArray
    ranking: tuple[str, ...]
    degenerate: bool = False

    def score_of(self, feature: str) -> float:
        return float(self.adjusted[self.feature_names.index(feature)])

    def rank_of(self, feature: str) -> int:
        '''1-based rank of a feature.'''
        return self.ranking.index(feature) + 1

    def normalized_scores(self) -> dict[str, float]:
        '''Adjusted scores rescaled from [0, 0.5] to [0, 1].'''
        return {name: float(2.0 * score) for name, score in zip(self.feature_names, self.adjusted, strict=True)}


@dc.dataclass(frozen=True)
class FleetRanking(DataclassMixin):
    event: str
    feature_names: tuple[str, ...]
    mean_adjusted: FloatArray
    ranking: tuple[str, ...]
    num_flights: int

    def score_of(self, feature: str) -> float:
        return float(self.mean_adjusted[self.feature_names.index(feature)])


@dc.dataclass(frozen=True)
class NominalEnvelope(DataclassMixin):
    feature_names: tuple[str, ...]
    mean: FloatArray  # (L, D)
    std: FloatArray  # (L, D)

    def band(self, feature: str, width: float = 2.0) -> tuple[FloatArray, FloatArray]:
        i = self.feature_names.index(feature)
        return self.mean[:, i] - width * self.std[:, i], self.mean[:, i] + width * self.std[:, i]


def extract(trace: ForwardTrace, index: int, class_index: int | None = None) -> tuple[FloatArray, FloatArray]:
    '''
    Raw (L, D) and temporal (L,) scores of one flight.

    `class_index` picks the output node of a multiple output trace.
    '''
    raw = trace.raw_scores[index]
    temporal = trace.temporal_scores[index]
    if temporal.ndim == 2:
        if class_index is None:
            raise PrecursorError('A multiple output trace needs `class_index`.')
        temporal = temporal[:, class_index]
    return raw, temporal


def find_window(temporal_scores: FloatArray, threshold: float = 0.5) -> tuple[IntArray, bool]:
    '''
    Steps whose temporal score is >= threshold.

    When no step qualifies the full index range is returned with
    `window_found=False`.
    '''
    scores = np.asarray(temporal_scores)
    window = np.flatnonzero(scores >= threshold)
    if window.size:
        return window, True
    return np.arange(scores.size), False


def adjusted_scores(raw_scores: FloatArray, window: IntArray) -> FloatArray:
    window = np.asarray(window)
    if window.size == 0:
        raise PrecursorError('The precursor window is empty.')
    return np.abs(raw_scores[window] - NEUTRAL_SCORE).mean(axis=0)


def signed_scores(raw_scores: FloatArray, window: IntArray) -> FloatArray:
    return (raw_scores[np.asarray(window)] - NEUTRAL_SCORE).mean(axis=0)


def rank_features(feature_names: Sequence[str], scores: FloatArray) -> tuple[str, ...]:
    '''Descending by score, ties by feature name.'''
    order = sorted(range(len(feature_names)), key=lambda i: (-float(scores[i]), feature_names[i]))
    return tuple(feature_names[i] for i in order)


def build_report(
    trace: ForwardTrace,
    index: int,
    flight_id: str,
    feature_names: Sequence[str],
    event: str,
    *,
    class_index: int | None = None,
) -> PrecursorReport:
    raw, temporal = extract(trace, index, class_index)
    window, found = find_window(temporal, trace.threshold)
    adjusted = adjusted_scores(raw, window)
    degenerate = bool(np.all(raw == NEUTRAL_SCORE))
    if degenerate:
        logger.warning('Flight `%s`: every raw score is neutral, ranking is degenerate', flight_id)
    return PrecursorReport(
        flight_id=flight_id,
        event=event,
        feature_names=tuple(feature_names),
        raw_scores=raw,
        temporal_scores=temporal,
        window=window,
        window_found=found,
        adjusted=adjusted,
        signed=signed_scores(raw, window),
        ranking=rank_features(tuple(feature_names), adjusted),
        degenerate=degenerate,
    )


def explain_flights(model: TrainedModel, dataset: FlightDataset) -> list[PrecursorReport]:
    '''
    Reports for every flight of `dataset` from a binary model.
    '''
    trace = model.trace(dataset.values)
    return [
        build_report(trace, i, flight_id, model.feature_names, model.event)
        for i, flight_id in enumerate(dataset.flight_ids)
    ]


def true_positive_reports(model: TrainedModel, dataset: FlightDataset) -> list[PrecursorReport]:
    trace = model.trace(dataset.values)
    hits = [
        i for i, label in enumerate(dataset.labels)
        if label == model.event and trace.positive[i]
    ]
    return [
        build_report(trace, i, dataset.flight_ids[i], model.feature_names, model.event)
        for i in hits
    ]


def fleet_aggregate(reports: Sequence[PrecursorReport]) -> FleetRanking:
    '''
    Mean adjusted score per feature across flights, with its ranking.

    Raises
    ------
    EmptyInput
        If there are no reports.
    '''
    if not reports:
        raise EmptyInput('precursor reports')
    names = reports[0].feature_names
    event = reports[0].event
    for report in reports[1:]:
        if report.feature_names != names or report.event != event:
            raise PrecursorError('Reports come from different models or feature lists.')
    mean = np.mean([report.adjusted for report in reports], axis=0)
    return FleetRanking(
        event=event,
        feature_names=names,
        mean_adjusted=mean,
        ranking=rank_features(names, mean),
        num_flights=len(reports),
    )


def nominal_envelope(dataset: FlightDataset) -> NominalEnvelope:
    '''
    Per feature, per step mean and sample standard deviation of the
    Nominal flights in `dataset`.
    '''
    nominal = dataset.with_labels({NOMINAL})
    if len(nominal) < 2:
        raise TooFewFlights(len(nominal))
    return NominalEnvelope(
        feature_names=dataset.feature_names,
        mean=nominal.values.mean(axis=0),
        std=nominal.values.std(axis=0, ddof=1),
    )


def window_onset_distance(report: PrecursorReport) -> float | None:
    '''Distance (nmi) of the first step of a found window.'''
    if not report.window_found:
        return None
    return float(DISTANCE_GRID[report.window[0]]) if len(report.temporal_scores) == DISTANCE_GRID.size else None
