'''
Confusion matrices, precision / recall / F1 and the ranking distance
between two per-feature precursor score tables.
'''
from __future__ import annotations

import dataclasses as dc
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from precursormil._exceptions import EvaluationError, FeatureSetMismatch, UndefinedMetric, UnknownClass
from precursormil._io import write_csv
from precursormil._model import DataclassMixin
from precursormil._types import FloatArray, IntArray

logger = logging.getLogger(__name__)

ScoreTable = Mapping[str, Mapping[str, float]]


@dc.dataclass(frozen=True)
class ConfusionMatrix(DataclassMixin):
    '''Rows are actual classes, columns predicted classes.'''

    classes: tuple[str, ...]
    counts: IntArray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def count(self, actual: str, predicted: str) -> int:
        return int(self.counts[self.classes.index(actual), self.classes.index(predicted)])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.counts, columns=[f'predicted_{c}' for c in self.classes])
        frame.insert(0, 'actual', list(self.classes))
        return frame


@dc.dataclass(frozen=True)
class Metrics(DataclassMixin):
    '''Precision, recall and F1; `None` marks an undefined metric.'''

    precision: float | None
    recall: float | None
    f1: float | None


def confusion(
    labels: Sequence[str],
    predictions: Sequence[str],
    classes: Sequence[str],
) -> ConfusionMatrix:
    if len(labels) != len(predictions):
        raise EvaluationError(f'{len(labels)} labels but {len(predictions)} predictions.')
    classes = tuple(classes)
    lookup = {name: i for i, name in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for actual, predicted in zip(labels, predictions, strict=True):
        for name in (actual, predicted):
            if name not in lookup:
                raise UnknownClass(name)
        counts[lookup[actual], lookup[predicted]] += 1
    return ConfusionMatrix(classes=classes, counts=counts)


def _ratio(numerator: int, denominator: int, name: str, strict: bool) -> float | None:
    if denominator == 0:
        if strict:
            raise UndefinedMetric(name)
        return None
    return numerator / denominator


def prf1(cm: ConfusionMatrix, positive: str, *, strict: bool = False) -> Metrics:
    '''
    One-vs-rest precision, recall and F1 for `positive`.

    Parameters
    ----------
    cm : ConfusionMatrix
        Binary or multi-class matrix.
    positive : str
        The class treated as positive.
    strict : bool, optional
        Raise `UndefinedMetric` on a zero denominator instead of returning
        `None` for that metric.
    '''
    if positive not in cm.classes:
        raise UnknownClass(positive)
    i = cm.classes.index(positive)
    tp = int(cm.counts[i, i])
    fp = int(cm.counts[:, i].sum()) - tp
    fn = int(cm.counts[i, :].sum()) - tp
    return Metrics(
        precision=_ratio(tp, tp + fp, 'precision', strict),
        recall=_ratio(tp, tp + fn, 'recall', strict),
        f1=_ratio(2 * tp, 2 * tp + fn + fp, 'f1', strict),
    )


def collapse(cm: ConfusionMatrix, positive: str) -> ConfusionMatrix:
    '''2x2 one-vs-rest matrix, negative class first.'''
    if positive not in cm.classes:
        raise UnknownClass(positive)
    i = cm.classes.index(positive)
    rest = [j for j in range(len(cm.classes)) if j != i]
    tp = cm.counts[i, i]
    fn = cm.counts[i, rest].sum()
    fp = cm.counts[rest, i].sum()
    tn = cm.counts[np.ix_(rest, rest)].sum()
    counts = np.array([[tn, fp], [fn, tp]], dtype=np.int64)
    return ConfusionMatrix(classes=(f'not_{positive}', positive), counts=counts)


def classification_report(cm: ConfusionMatrix) -> pd.DataFrame:
    rows = []
    for name in cm.classes:
        metrics = prf1(cm, name)
        rows.append({
            'class': name,
            'precision': metrics.precision,
            'recall': metrics.recall,
            'f1': metrics.f1,
            'support': int(cm.counts[cm.classes.index(name)].sum()),
        })
    return pd.DataFrame(rows, columns=['class', 'precision', 'recall', 'f1', 'support'])


def macro_f1(cm: ConfusionMatrix) -> float | None:
    scores = [m.f1 for m in (prf1(cm, name) for name in cm.classes) if m.f1 is not None]
    return float(np.mean(scores)) if scores else None


# -- precursor ranking distance ----------------------------------------------


@dc.dataclass(frozen=True)
class ReferenceScores(DataclassMixin):
    '''Per flight, per feature scores in [0, 1] from an external tool.'''

    scores: dict[str, dict[str, float]]

    def __post_init__(self) -> None:
        for flight_id, table in self.scores.items():
            for feature, score in table.items():
                if not 0.0 <= score <= 1.0:
                    raise EvaluationError(
                        f'Reference score {score} for `{flight_id}`/`{feature}` is outside [0, 1].'
                    )

    @property
    def flight_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.scores))


def load_reference_scores(path: str | Path) -> ReferenceScores:
    frame = pd.read_csv(path, dtype={'flight_id': str, 'feature': str})
    missing = {'flight_id', 'feature', 'score'} - set(frame.columns)
    if missing:
        raise EvaluationError(f'Reference file `{path}` lacks column(s) {sorted(missing)}.')
    scores: dict[str, dict[str, float]] = {}
    for row in frame.itertuples(index=False):
        scores.setdefault(row.flight_id, {})[row.feature] = float(row.score)
    return ReferenceScores(scores=scores)


def _as_matrix(table: ScoreTable, flights: Sequence[str], features: Sequence[str]) -> FloatArray:
    return np.array([[float(table[f][name]) for name in features] for f in flights], dtype=np.float64)


def align_scores(ours: ScoreTable, reference: ScoreTable) -> tuple[dict[str, dict[str, float]], dict[str, dict[str, float]]]:
    '''
    Restrict both tables to their common flights and the reference features.
    '''
    flights = sorted(set(ours) & set(reference))
    left: dict[str, dict[str, float]] = {}
    right: dict[str, dict[str, float]] = {}
    for flight in flights:
        features = sorted(set(reference[flight]) & set(ours[flight]))
        left[flight] = {name: float(ours[flight][name]) for name in features}
        right[flight] = {name: float(reference[flight][name]) for name in features}
    return left, right


def dfa(ours: ScoreTable, reference: ScoreTable | ReferenceScores) -> float:
    '''
    Mean over flights of the mean squared score difference over features.

    Both tables must cover the same flights and, per flight, the same
    features, with scores in [0, 1].

    Raises
    ------
    FeatureSetMismatch
        If flights or features differ between the two tables.
    '''
    ref = reference.scores if isinstance(reference, ReferenceScores) else reference
    flights = sorted(ours)
    if set(flights) != set(ref):
        raise FeatureSetMismatch('flight sets differ')
    if not flights:
        raise FeatureSetMismatch('no flights to compare')

    per_flight = []
    for flight in flights:
        features = sorted(ours[flight])
        if set(features) != set(ref[flight]) or not features:
            raise FeatureSetMismatch(f'feature sets differ for `{flight}`')
        a = _as_matrix(ours, [flight], features)
        b = _as_matrix(ref, [flight], features)
        per_flight.append(float(np.mean((a - b) ** 2)))
    return float(np.mean(per_flight))


def write_confusion(cm: ConfusionMatrix, path: str | Path) -> Path:
    return write_csv(cm.to_frame(), path)


def write_metrics(cm: ConfusionMatrix, path: str | Path) -> Path:
    frame = classification_report(cm).astype(object).where(lambda f: f.notna(), 'undefined')
    return write_csv(frame, path)
