'''
Correlation based feature selection.

Pearson coefficients are computed on the resampled data pooled over all
flights and grid points. A greedy pass in feature order removes every
feature whose absolute correlation with an earlier kept feature reaches
the threshold; trivial precursors are excluded outright.
'''
from __future__ import annotations

import dataclasses as dc
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
import pandas as pd

from precursormil._exceptions import ConfigInvalid, ZeroVariance
from precursormil._io import write_csv
from precursormil._model import DataclassMixin
from precursormil._types import FloatArray
from precursormil.flights import ResampledFlight

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.90


@dc.dataclass(frozen=True)
class CorrelationMatrix(DataclassMixin):
    features: tuple[str, ...]
    rho: FloatArray
    constant: tuple[str, ...] = ()

    def coefficient(self, a: str, b: str) -> float:
        return float(self.rho[self.features.index(a), self.features.index(b)])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rho, columns=list(self.features))
        frame.insert(0, 'feature', list(self.features))
        return frame


@dc.dataclass(frozen=True)
class RemovedFeature(DataclassMixin):
    name: str
    kept_partner: str
    abs_rho: float


@dc.dataclass(frozen=True)
class SelectionResult(DataclassMixin):
    kept: tuple[str, ...]
    removed: tuple[RemovedFeature, ...] = ()
    excluded_trivial: tuple[str, ...] = ()
    excluded_constant: tuple[str, ...] = ()
    threshold: float = DEFAULT_THRESHOLD

    def to_frame(self) -> pd.DataFrame:
        rows: list[dict[str, object]] = [
            {'feature': name, 'status': 'kept', 'partner': '', 'abs_rho': None}
            for name in self.kept
        ]
        rows += [
            {'feature': r.name, 'status': 'removed', 'partner': r.kept_partner, 'abs_rho': r.abs_rho}
            for r in self.removed
        ]
        rows += [
            {'feature': name, 'status': 'trivial', 'partner': '', 'abs_rho': None}
            for name in self.excluded_trivial
        ]
        rows += [
            {'feature': name, 'status': 'constant', 'partner': '', 'abs_rho': None}
            for name in self.excluded_constant
        ]
        return pd.DataFrame(rows, columns=['feature', 'status', 'partner', 'abs_rho'])


def pooled_matrix(flights: Sequence[ResampledFlight]) -> tuple[FloatArray, tuple[str, ...]]:
    '''
    Stack every flight's grid rows into one (flights * 81, D0) matrix.

    All flights must carry the same feature list in the same order.
    '''
    if not flights:
        return np.empty((0, 0)), ()
    names = flights[0].feature_names
    for flight in flights[1:]:
        if flight.feature_names != names:
            raise ConfigInvalid(
                'feature_names',
                f'flight `{flight.flight_id}` has a different feature list',
            )
    return np.vstack([flight.values for flight in flights]), names


def correlation_matrix(
    values: FloatArray,
    features: Sequence[str],
    *,
    strict: bool = False,
) -> CorrelationMatrix:
    '''
    Pearson correlation of the columns of `values`.

    Parameters
    ----------
    values : FloatArray
        Samples in rows, features in columns.
    features : Sequence[str]
        Column names.
    strict : bool, optional
        Raise `ZeroVariance` for a constant column instead of dropping it
        with a warning.
    '''
    values = np.asarray(values, dtype=np.float64)
    features = tuple(features)
    variance = values.var(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(len(features))

    constant = tuple(name for name, var in zip(features, variance, strict=True) if not var > 0)
    for name in constant:
        if strict:
            raise ZeroVariance(name)
        logger.warning('Excluding constant feature `%s`', name)

    live = [i for i, name in enumerate(features) if name not in constant]
    kept_names = tuple(features[i] for i in live)
    if not live:
        return CorrelationMatrix(features=(), rho=np.empty((0, 0)), constant=constant)

    rho = np.atleast_2d(np.corrcoef(values[:, live], rowvar=False))
    rho = np.clip((rho + rho.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(rho, 1.0)
    return CorrelationMatrix(features=kept_names, rho=rho, constant=constant)


def compute_correlation(flights: Sequence[ResampledFlight], *, strict: bool = False) -> CorrelationMatrix:
    values, names = pooled_matrix(flights)
    return correlation_matrix(values, names, strict=strict)


def select_features(
    corr: CorrelationMatrix,
    threshold: float = DEFAULT_THRESHOLD,
    trivial: Iterable[str] = (),
) -> SelectionResult:
    '''
    Greedy correlation filter in feature order.

    A feature is removed when |rho| >= threshold against any earlier kept
    feature; the earlier one stays. Names in `trivial` never enter the
    kept list and never act as a partner.
    '''
    if not 0.0 < threshold <= 1.0:
        raise ConfigInvalid('threshold', f'{threshold} is outside (0, 1]')

    trivial_set = set(trivial)
    kept: list[int] = []
    removed: list[RemovedFeature] = []
    excluded: list[str] = []

    for i, name in enumerate(corr.features):
        if name in trivial_set:
            excluded.append(name)
            continue
        partner = next((j for j in kept if abs(corr.rho[i, j]) >= threshold), None)
        if partner is None:
            kept.append(i)
        else:
            removed.append(RemovedFeature(
                name=name,
                kept_partner=corr.features[partner],
                abs_rho=float(abs(corr.rho[i, partner])),
            ))

    result = SelectionResult(
        kept=tuple(corr.features[i] for i in kept),
        removed=tuple(removed),
        excluded_trivial=tuple(excluded),
        excluded_constant=corr.constant,
        threshold=threshold,
    )
    logger.info(
        'Selected %d feature(s); removed %d correlated, %d trivial, %d constant',
        len(result.kept), len(result.removed), len(result.excluded_trivial), len(result.excluded_constant),
    )
    return result


def apply_selection(flights: Iterable[ResampledFlight], result: SelectionResult) -> list[ResampledFlight]:
    return [flight.select(result.kept) for flight in flights]


def write_selection(result: SelectionResult, path: str | Path) -> Path:
    return write_csv(result.to_frame(), path)


def write_correlation(corr: CorrelationMatrix, path: str | Path) -> Path:
    return write_csv(corr.to_frame(), path)
