'''
Synthetic flight corpora with planted precursors.

Nominal flights are per-feature cubic trajectories in distance plus
Gaussian noise. Flights of a positive class additionally drift on each of
their planted features: from the onset distance a half-cosine ramp
reaches the full amplitude (in nominal standard deviations) within
1 nmi and holds it down to 0 nmi.
'''
from __future__ import annotations

import dataclasses as dc
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from precursormil._exceptions import SpecInvalid
from precursormil._io import write_csv
from precursormil._model import DataclassMixin
from precursormil._types import FloatArray
from precursormil.flights import DISTANCE_GRID, GRID_POINTS, GRID_START_NM, NOMINAL, FlightRecord, FlightSchema

logger = logging.getLogger(__name__)

RAMP_WIDTH_NM = 1.0
TRACK_START_NM = 20.5
POSITIVE_SEVERITY = 3


@dc.dataclass(frozen=True)
class PlantedPrecursor(DataclassMixin):
    label: str
    feature: int
    onset_nm: float
    amplitude: float


@dc.dataclass(frozen=True)
class SynthSpec(DataclassMixin):
    '''
    Parameters
    ----------
    n_flights : dict[str, int]
        Flights per class; `Nominal` plus one entry per positive class.
    num_features : int
        D, the number of generated features.
    planted : tuple[PlantedPrecursor, ...]
        Drifts applied to positive classes.
    noise_std : float
        Noise scale, relative to each feature's own unit.
    correlation : float
        Weight in [0, 1) of a latent shared by the features that are never
        planted; it correlates them without changing their variance.
    extra_samples : int
        Raw samples added at random distances on top of the grid points,
        so ingestion has to resample.
    seed : int
        Master seed; the corpus is a pure function of this `SynthSpec`.
    '''

    n_flights: dict[str, int] = dc.field(default_factory=lambda: {NOMINAL: 100, 'HighSpeed': 100})
    num_features: int = 12
    length: int = GRID_POINTS
    planted: tuple[PlantedPrecursor, ...] = (PlantedPrecursor('HighSpeed', 3, 5.0, 4.0),)
    noise_std: float = 1.0
    correlation: float = 0.0
    extra_samples: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, 'n_flights', {str(k): int(v) for k, v in self.n_flights.items()})
        object.__setattr__(self, 'planted', tuple(
            p if isinstance(p, PlantedPrecursor) else PlantedPrecursor(**p) for p in self.planted
        ))
        self.validate()

    def validate(self) -> None:
        if self.length != GRID_POINTS:
            raise SpecInvalid(f'length must be {GRID_POINTS}, got {self.length}')
        if self.num_features < 1:
            raise SpecInvalid(f'num_features must be >= 1, got {self.num_features}')
        if any(count < 0 for count in self.n_flights.values()):
            raise SpecInvalid('flight counts must be >= 0')
        if not self.noise_std > 0:
            raise SpecInvalid(f'noise_std must be > 0, got {self.noise_std}')
        if not 0.0 <= self.correlation < 1.0:
            raise SpecInvalid(f'correlation must be in [0, 1), got {self.correlation}')
        if self.extra_samples < 0:
            raise SpecInvalid('extra_samples must be >= 0')
        for p in self.planted:
            if p.label == NOMINAL or p.label not in self.n_flights:
                raise SpecInvalid(f'planted label `{p.label}` is not a positive class of the corpus')
            if not 0 <= p.feature < self.num_features:
                raise SpecInvalid(f'planted feature {p.feature} is outside [0, {self.num_features})')
            if not 0.0 < p.onset_nm <= GRID_START_NM:
                raise SpecInvalid(f'onset {p.onset_nm} nmi is outside (0, {GRID_START_NM:g}]')
            if p.amplitude < 0:
                raise SpecInvalid(f'amplitude {p.amplitude} must be >= 0')
        planted_labels = {p.label for p in self.planted}
        for label in self.positive_classes:
            if label not in planted_labels:
                raise SpecInvalid(f'positive class `{label}` has no planted feature')

    @property
    def positive_classes(self) -> tuple[str, ...]:
        return tuple(sorted(label for label in self.n_flights if label != NOMINAL))

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f'x{i:02d}' for i in range(self.num_features))

    def planted_for(self, label: str) -> tuple[PlantedPrecursor, ...]:
        return tuple(p for p in self.planted if p.label == label)


def create_spec(
    *,
    n_per_class: int = 600,
    num_features: int = 12,
    events: Mapping[str, int] | None = None,
    onset_nm: float = 5.0,
    amplitude: float = 4.0,
    seed: int = 0,
    **kwargs: Any,
) -> SynthSpec:
    '''
    Balanced corpus with one planted feature per event class.

    `events` maps each event class to the index of its planted feature;
    the default plants HighSpeed on feature 3, or on the last feature
    when there are fewer than four.
    '''
    events = dict(events) if events is not None else {'HighSpeed': min(3, num_features - 1)}
    return SynthSpec(
        n_flights={NOMINAL: n_per_class} | {label: n_per_class for label in events},
        num_features=num_features,
        planted=tuple(PlantedPrecursor(label, feature, onset_nm, amplitude) for label, feature in events.items()),
        seed=seed,
        **kwargs,
    )


def ramp(distance: FloatArray, onset_nm: float) -> FloatArray:
    '''0 before the onset, half-cosine up to 1 over `RAMP_WIDTH_NM`, then 1.'''
    progress = np.clip((onset_nm - np.asarray(distance)) / RAMP_WIDTH_NM, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(np.pi * progress))


@dc.dataclass(frozen=True)
class _Bases:
    coefficients: FloatArray  # (D, 4), cubic in d / 20
    scale: FloatArray  # (D,)

    def evaluate(self, distance: FloatArray) -> FloatArray:
        u = np.asarray(distance)[:, None] / GRID_START_NM
        powers = np.concatenate([u ** k for k in range(4)], axis=1)
        return powers @ self.coefficients.T * self.scale


def _bases(spec: SynthSpec) -> _Bases:
    rng = np.random.default_rng([spec.seed, 0])
    return _Bases(
        coefficients=rng.normal(0.0, 2.0, size=(spec.num_features, 4)),
        scale=10.0 ** rng.uniform(-1.0, 1.0, size=spec.num_features),
    )


def _track(rng: np.random.Generator, extra: int) -> FloatArray:
    points = np.concatenate([
        DISTANCE_GRID,
        [TRACK_START_NM],
        rng.uniform(0.0, TRACK_START_NM, size=extra),
    ])
    return np.unique(points)[::-1]


def _flight(
    spec: SynthSpec,
    bases: _Bases,
    label: str,
    index: int,
) -> FlightRecord:
    rng = np.random.default_rng([spec.seed, 1, index])
    distance = _track(rng, spec.extra_samples)
    n = distance.size

    noise = rng.normal(0.0, 1.0, size=(n, spec.num_features))
    if spec.correlation > 0:
        latent = rng.normal(0.0, 1.0, size=(n, 1))
        mixed = np.sqrt(1.0 - spec.correlation) * noise + np.sqrt(spec.correlation) * latent
        shared = np.ones(spec.num_features, dtype=bool)
        shared[[p.feature for p in spec.planted]] = False
        noise[:, shared] = mixed[:, shared]

    sigma = spec.noise_std * bases.scale
    values = bases.evaluate(distance) + noise * sigma
    for p in spec.planted_for(label):
        values[:, p.feature] += p.amplitude * sigma[p.feature] * ramp(distance, p.onset_nm)

    severity = 0 if label == NOMINAL else POSITIVE_SEVERITY
    return FlightRecord(
        flight_id=f'flight_{index:05d}',
        series={name: values[:, i] for i, name in enumerate(spec.feature_names)},
        distance_to_ref=distance,
        label=label,
        severity=severity,
        events=() if label == NOMINAL else ((label, severity),),
    )


def generate(spec: SynthSpec) -> list[FlightRecord]:
    '''
    Labeled flights, Nominal first then positive classes in name order.

    Raises
    ------
    SpecInvalid
        If `spec` fails validation.
    '''
    spec.validate()
    bases = _bases(spec)
    order = ((NOMINAL,) if NOMINAL in spec.n_flights else ()) + spec.positive_classes
    records: list[FlightRecord] = []
    for label in order:
        for _ in range(spec.n_flights[label]):
            records.append(_flight(spec, bases, label, len(records)))
    logger.info('Generated %d synthetic flight(s) over %d class(es)', len(records), len(order))
    return records


def nominal_sigma(spec: SynthSpec) -> FloatArray:
    '''Per-feature standard deviation of the nominal noise.'''
    return spec.noise_std * _bases(spec).scale


def write_corpus(
    records: Iterable[FlightRecord],
    out_dir: str | Path,
    schema: FlightSchema | None = None,
) -> list[Path]:
    '''
    One CSV per flight plus the labels manifest, in the ingestion layout.
    '''
    schema = schema or FlightSchema()
    out_dir = Path(out_dir)
    written: list[Path] = []
    label_rows: list[dict[str, object]] = []
    for record in records:
        frame = pd.DataFrame(record.series)
        frame.insert(0, schema.distance_column, record.distance_to_ref)
        written.append(write_csv(frame, out_dir / f'{record.flight_id}.csv'))
        for label, severity in record.events:
            label_rows.append({
                schema.flight_id_column: record.flight_id,
                schema.label_column: label,
                schema.severity_column: severity,
            })

    labels = pd.DataFrame(
        label_rows,
        columns=[schema.flight_id_column, schema.label_column, schema.severity_column],
    )
    written.append(write_csv(labels, out_dir / schema.labels_file))
    logger.info('Wrote %d flight file(s) to %s', len(written) - 1, out_dir)
    return written


def planted_table(spec: SynthSpec) -> pd.DataFrame:
    rows: Sequence[dict[str, object]] = [
        {
            'label': p.label,
            'feature': spec.feature_names[p.feature],
            'onset_nm': p.onset_nm,
            'amplitude': p.amplitude,
        }
        for p in spec.planted
    ]
    return pd.DataFrame(rows, columns=['label', 'feature', 'onset_nm', 'amplitude'])


def write_planted(spec: SynthSpec, out_dir: str | Path, schema: FlightSchema | None = None) -> Path:
    '''Planted precursor table, kept under the corpus' meta directory so ingestion skips it.'''
    schema = schema or FlightSchema()
    return write_csv(planted_table(spec), Path(out_dir) / schema.meta_dir / 'planted.csv')
