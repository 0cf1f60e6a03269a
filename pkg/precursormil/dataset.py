from __future__ import annotations

import dataclasses as dc
from collections.abc import Iterable, Sequence

import numpy as np
from sklearn.preprocessing import StandardScaler

from precursormil._exceptions import ConfigInvalid
from precursormil._model import DataclassMixin
from precursormil._types import BoolArray, FloatArray, IntArray
from precursormil.flights import DISTANCE_GRID, NOMINAL, ResampledFlight


@dc.dataclass(frozen=True)
class FlightDataset(DataclassMixin):
    '''
    Tensorized corpus of shape (N, L, D) with bag labels.

    `values` holds engineering units; standardization happens inside the
    model so raw values stay available for envelopes and plots.
    '''

    values: FloatArray
    flight_ids: tuple[str, ...]
    labels: tuple[str, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        n = len(self.flight_ids)
        if self.values.ndim != 3 or self.values.shape[0] != n or len(self.labels) != n:
            raise ConfigInvalid('values', f'shape {self.values.shape} does not match {n} flights')
        if self.values.shape[2] != len(self.feature_names):
            raise ConfigInvalid('feature_names', 'length differs from the tensor feature axis')

    def __len__(self) -> int:
        return len(self.flight_ids)

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def num_features(self) -> int:
        return self.values.shape[2]

    @property
    def classes(self) -> tuple[str, ...]:
        '''Labels present, Nominal first and the rest sorted.'''
        present = set(self.labels)
        rest = sorted(present - {NOMINAL})
        return ((NOMINAL,) if NOMINAL in present else ()) + tuple(rest)

    def subset(self, index: IntArray | BoolArray | Sequence[int]) -> FlightDataset:
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return FlightDataset(
            values=self.values[index],
            flight_ids=tuple(self.flight_ids[i] for i in index),
            labels=tuple(self.labels[i] for i in index),
            feature_names=self.feature_names,
        )

    def with_labels(self, keep: Iterable[str]) -> FlightDataset:
        keep = set(keep)
        return self.subset(np.array([label in keep for label in self.labels], dtype=bool))

    def binary_view(self, event: str) -> FlightDataset:
        '''Nominal flights plus the flights of one event.'''
        return self.with_labels({NOMINAL, event})

    def binary_targets(self, event: str) -> FloatArray:
        return np.array([label == event for label in self.labels], dtype=np.float64)

    def one_hot(self, classes: Sequence[str]) -> FloatArray:
        out = np.zeros((len(self), len(classes)))
        lookup = {name: i for i, name in enumerate(classes)}
        for row, label in enumerate(self.labels):
            if label not in lookup:
                raise ConfigInvalid('classes', f'label `{label}` is not among {list(classes)}')
            out[row, lookup[label]] = 1.0
        return out

    def index_of(self, flight_id: str) -> int:
        return self.flight_ids.index(flight_id)


def build_dataset(
    flights: Sequence[ResampledFlight],
    feature_names: Sequence[str] | None = None,
) -> FlightDataset:
    '''
    Stack resampled flights into an (N, 81, D) tensor in `feature_names` order.
    '''
    if not flights:
        names = tuple(feature_names or ())
        return FlightDataset(np.empty((0, DISTANCE_GRID.size, len(names))), (), (), names)
    names = tuple(feature_names) if feature_names is not None else flights[0].feature_names
    values = np.stack([flight.select(names).values for flight in flights])
    return FlightDataset(
        values=values,
        flight_ids=tuple(flight.flight_id for flight in flights),
        labels=tuple(flight.label for flight in flights),
        feature_names=names,
    )


@dc.dataclass(frozen=True)
class FeatureScaler(DataclassMixin):
    '''Per-feature standardization fitted over flights and grid points.'''

    mean: FloatArray
    scale: FloatArray

    @classmethod
    def fit(cls, values: FloatArray) -> FeatureScaler:
        # only the fitted statistics are kept so checkpoints stay plain JSON
        scaler = StandardScaler().fit(values.reshape(-1, values.shape[-1]))
        return cls(mean=scaler.mean_.astype(np.float64), scale=scaler.scale_.astype(np.float64))

    @classmethod
    def identity(cls, num_features: int) -> FeatureScaler:
        return cls(mean=np.zeros(num_features), scale=np.ones(num_features))

    def transform(self, values: FloatArray) -> FloatArray:
        return (values - self.mean) / self.scale
