'''
Raw flight ingestion, label policy filtering and distance resampling.

Every flight is resampled onto one shared grid of 81 points, 20 nmi to
0 nmi from the 1,000 ft above touchdown mark in 0.25 nmi steps.
'''
from __future__ import annotations

import dataclasses as dc
import enum
import io
import logging
import zipfile
from collections.abc import Iterable, Iterator
from pathlib import Path

import numpy as np
import pandas as pd

from precursormil._exceptions import (
    EmptyFile,
    FlightDataError,
    InsufficientRange,
    LabelMismatch,
    MissingColumn,
    NonMonotoneDistance,
    NonNumericCell,
)
from precursormil._io import write_csv
from precursormil._model import DataclassMixin
from precursormil._types import FloatArray

logger = logging.getLogger(__name__)

GRID_START_NM = 20.0
GRID_STEP_NM = 0.25
GRID_POINTS = 81

DISTANCE_GRID: FloatArray = GRID_START_NM - GRID_STEP_NM * np.arange(GRID_POINTS, dtype=np.float64)
DISTANCE_GRID.flags.writeable = False

_RANGE_TOL = 1e-9


class EventLabel(enum.StrEnum):
    NOMINAL = 'Nominal'
    HIGH_SPEED = 'HighSpeed'
    HIGH_PATH_ANGLE = 'HighPathAngle'
    LOW_SPEED = 'LowSpeed'
    HIGH_RATE_OF_DESCENT = 'HighRateOfDescent'
    UNSTABLE_APPROACH = 'UnstableApproach'
    LATE_FLAPS = 'LateFlaps'
    LATE_GEAR = 'LateGear'
    HIGH_BANK = 'HighBank'


NOMINAL = EventLabel.NOMINAL.value


@dc.dataclass(frozen=True)
class FlightRecord(DataclassMixin):
    flight_id: str
    series: dict[str, FloatArray]
    distance_to_ref: FloatArray
    label: str = NOMINAL
    severity: int = 0
    events: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        n = len(self.distance_to_ref)
        for name, values in self.series.items():
            if len(values) != n:
                raise FlightDataError(
                    f'Flight `{self.flight_id}` feature `{name}` has {len(values)} '
                    f'samples but the distance track has {n}.'
                )
        if not 0 <= self.severity <= 3:
            raise LabelMismatch(self.flight_id, self.label, self.severity)
        if (self.severity == 0) != (self.label == NOMINAL):
            raise LabelMismatch(self.flight_id, self.label, self.severity)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(self.series)

    @property
    def is_multi_event(self) -> bool:
        return sum(1 for label, _ in self.events if label != NOMINAL) > 1


@dc.dataclass(frozen=True)
class ResampledFlight(DataclassMixin):
    flight_id: str
    feature_names: tuple[str, ...]
    values: FloatArray
    label: str = NOMINAL
    severity: int = 0

    def __post_init__(self) -> None:
        if self.values.shape != (GRID_POINTS, len(self.feature_names)):
            raise FlightDataError(
                f'Flight `{self.flight_id}` resampled values have shape '
                f'{self.values.shape}, expected ({GRID_POINTS}, {len(self.feature_names)}).'
            )
        if not np.isfinite(self.values).all():
            raise FlightDataError(f'Flight `{self.flight_id}` has non-finite resampled values.')

    @property
    def grid(self) -> FloatArray:
        return DISTANCE_GRID

    def column(self, feature: str) -> FloatArray:
        return self.values[:, self.feature_names.index(feature)]

    def as_record(self) -> FlightRecord:
        return FlightRecord(
            flight_id=self.flight_id,
            series={name: self.values[:, i].copy() for i, name in enumerate(self.feature_names)},
            distance_to_ref=DISTANCE_GRID.copy(),
            label=self.label,
            severity=self.severity,
        )

    def select(self, features: Iterable[str]) -> ResampledFlight:
        names = tuple(features)
        idx = [self.feature_names.index(name) for name in names]
        return dc.replace(self, feature_names=names, values=self.values[:, idx])


@dc.dataclass(frozen=True)
class FlightSchema(DataclassMixin):
    distance_column: str = 'dist_nm'
    labels_file: str = 'labels.csv'
    flight_id_column: str = 'flight_id'
    label_column: str = 'label'
    severity_column: str = 'severity'
    meta_dir: str = 'meta'
    rename: dict[str, str] = dc.field(default_factory=dict)


@dc.dataclass(frozen=True)
class FilterPolicy(DataclassMixin):
    '''
    Which flights enter a study.

    `keep_labels=None` accepts any label; an empty set accepts none.
    '''
    keep_severities: frozenset[int] = frozenset({0, 3})
    keep_labels: frozenset[str] | None = None
    drop_multi_event: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, 'keep_severities', frozenset(int(s) for s in self.keep_severities))
        if self.keep_labels is not None:
            object.__setattr__(self, 'keep_labels', frozenset(str(s) for s in self.keep_labels))

    def accepts(self, record: FlightRecord) -> bool:
        if record.severity not in self.keep_severities:
            return False
        if self.keep_labels is not None and record.label not in self.keep_labels:
            return False
        return not (self.drop_multi_event and record.is_multi_event)


# -- loading -----------------------------------------------------------------


def _read_labels(frame: pd.DataFrame, schema: FlightSchema) -> dict[str, list[tuple[str, int]]]:
    for column in (schema.flight_id_column, schema.label_column, schema.severity_column):
        if column not in frame.columns:
            raise MissingColumn(column, schema.labels_file)

    out: dict[str, list[tuple[str, int]]] = {}
    for row in frame.itertuples(index=False):
        flight_id = str(getattr(row, schema.flight_id_column))
        label = str(getattr(row, schema.label_column))
        severity = int(getattr(row, schema.severity_column))
        out.setdefault(flight_id, []).append((label, severity))
    return out


def _label_for(events: list[tuple[str, int]]) -> tuple[str, int]:
    if not events:
        return NOMINAL, 0
    # highest severity wins, first listed on ties
    return max(events, key=lambda event: event[1])


def _parse_flight_table(
    frame: pd.DataFrame,
    name: str,
    schema: FlightSchema,
) -> tuple[FloatArray, dict[str, FloatArray]]:
    if frame.empty:
        raise EmptyFile(name)

    frame = frame.rename(columns=schema.rename)
    if schema.distance_column not in frame.columns:
        raise MissingColumn(schema.distance_column, name)

    features = [c for c in frame.columns if c != schema.distance_column]
    if not features:
        raise MissingColumn('<feature>', name)

    coerced = frame.apply(pd.to_numeric, errors='coerce').to_numpy(dtype=np.float64)
    bad = np.argwhere(~np.isfinite(coerced))
    if bad.size:
        row, col = bad[0]
        raise NonNumericCell(name, int(row) + 1, str(frame.columns[col]))
    # pandas' fast parser can be 1 ulp off; float() is round-trip exact
    numeric = frame.to_numpy(dtype=object).astype(np.float64)

    columns = list(frame.columns)
    distance = numeric[:, columns.index(schema.distance_column)].copy()
    series = {feature: numeric[:, columns.index(feature)].copy() for feature in features}
    return distance, series


def _read_csv(handle: io.IOBase | Path, name: str) -> pd.DataFrame:
    try:
        return pd.read_csv(handle, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise EmptyFile(name) from None


def _iter_tables(path: Path, schema: FlightSchema) -> Iterator[tuple[str, pd.DataFrame | FlightDataError]]:
    if zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as archive:
            names = sorted(
                n for n in archive.namelist()
                if n.endswith('.csv')
                and Path(n).name != schema.labels_file
                and schema.meta_dir not in Path(n).parts[:-1]
            )
            for name in names:
                with archive.open(name) as handle:
                    try:
                        yield name, _read_csv(handle, name)
                    except FlightDataError as exc:
                        yield name, exc
        return

    for file in sorted(path.glob('*.csv')):
        if file.name == schema.labels_file:
            continue
        try:
            yield str(file), _read_csv(file, str(file))
        except FlightDataError as exc:
            yield str(file), exc


def _load_label_table(path: Path, schema: FlightSchema) -> pd.DataFrame | None:
    if zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as archive:
            matches = [n for n in archive.namelist() if Path(n).name == schema.labels_file]
            if not matches:
                return None
            with archive.open(matches[0]) as handle:
                return pd.read_csv(handle, dtype={schema.flight_id_column: str})

    labels_path = path / schema.labels_file
    if not labels_path.exists():
        return None
    return pd.read_csv(labels_path, dtype={schema.flight_id_column: str})


def load_flights(
    path: str | Path,
    schema: FlightSchema | None = None,
    *,
    strict: bool = True,
) -> list[FlightRecord]:
    '''
    Load one FlightRecord per CSV file in a directory or zip archive.

    Parameters
    ----------
    path : str | Path
        Directory (or `.zip` archive) holding one CSV per flight and an
        optional labels manifest. Flights absent from the manifest are
        Nominal with severity 0.
    schema : FlightSchema, optional
        Column names; defaults to `dist_nm` and `labels.csv`.
    strict : bool, optional
        Raise on the first unparseable file (default). When False the
        file is reported through the log and skipped.

    Returns
    -------
    list[FlightRecord]
        Records in file-name order.
    '''
    schema = schema or FlightSchema()
    path = Path(path)
    label_table = _load_label_table(path, schema)
    labels = _read_labels(label_table, schema) if label_table is not None else {}

    records: list[FlightRecord] = []
    for name, table in _iter_tables(path, schema):
        flight_id = Path(name).stem
        try:
            if isinstance(table, FlightDataError):
                raise table
            distance, series = _parse_flight_table(table, name, schema)
            events = labels.get(flight_id, [])
            label, severity = _label_for(events)
            records.append(FlightRecord(
                flight_id=flight_id,
                series=series,
                distance_to_ref=distance,
                label=label,
                severity=severity,
                events=tuple(events),
            ))
        except FlightDataError as exc:
            if strict:
                raise
            logger.warning('Skipping `%s`: %s', name, exc)

    logger.info('Loaded %d flight(s) from %s', len(records), path)
    return records


def filter_by_policy(records: Iterable[FlightRecord], policy: FilterPolicy) -> list[FlightRecord]:
    kept = [record for record in records if policy.accepts(record)]
    logger.info('Policy kept %d flight(s)', len(kept))
    return kept


# -- resampling --------------------------------------------------------------


def _monotone_track(record: FlightRecord) -> tuple[FloatArray, FloatArray]:
    '''
    Return (ascending distance, kept sample index) after dropping repeats.

    Only consecutive exact duplicates are dropped; the first sample of a
    run is kept.
    '''
    distance = np.asarray(record.distance_to_ref, dtype=np.float64)
    if distance.size == 0:
        raise InsufficientRange(record.flight_id, float('nan'), float('nan'))

    keep = np.ones(distance.size, dtype=bool)
    keep[1:] = np.diff(distance) != 0
    index = np.flatnonzero(keep)
    track = distance[index]

    steps = np.diff(track)
    if steps.size and not ((steps < 0).all() or (steps > 0).all()):
        direction = np.sign(steps[0])
        violation = int(np.flatnonzero(np.sign(steps) != direction)[0]) + 1
        raise NonMonotoneDistance(record.flight_id, int(index[violation]))

    low, high = float(track.min()), float(track.max())
    if high < GRID_START_NM - _RANGE_TOL or low > _RANGE_TOL:
        raise InsufficientRange(record.flight_id, low, high)

    if steps.size and steps[0] < 0:
        index = index[::-1]
        track = track[::-1]
    return track, index


def resample_flight(record: FlightRecord) -> ResampledFlight:
    '''
    Linearly interpolate every feature onto the shared 81-point grid.

    Raises
    ------
    InsufficientRange
        If the track does not reach from 20 nmi down to 0 nmi.
    NonMonotoneDistance
        If the distance track reverses after dropping repeated samples.
    '''
    track, index = _monotone_track(record)
    columns = [
        np.interp(DISTANCE_GRID, track, np.asarray(values, dtype=np.float64)[index])
        for values in record.series.values()
    ]
    values = np.column_stack(columns) if columns else np.empty((GRID_POINTS, 0))
    return ResampledFlight(
        flight_id=record.flight_id,
        feature_names=record.feature_names,
        values=values,
        label=record.label,
        severity=record.severity,
    )


def resample_all(records: Iterable[FlightRecord], *, strict: bool = True) -> list[ResampledFlight]:
    out: list[ResampledFlight] = []
    for record in records:
        try:
            out.append(resample_flight(record))
        except FlightDataError as exc:
            if strict:
                raise
            logger.warning('Rejecting flight `%s`: %s', record.flight_id, exc)
    return out


def write_resampled(
    flights: Iterable[ResampledFlight],
    out_dir: str | Path,
    schema: FlightSchema | None = None,
) -> list[Path]:
    '''
    Persist resampled flights as one CSV each plus a labels manifest.

    The files use the ingestion layout, so `load_flights` reads them back.
    '''
    schema = schema or FlightSchema()
    out_dir = Path(out_dir)
    written: list[Path] = []
    label_rows: list[dict[str, object]] = []
    for flight in flights:
        frame = pd.DataFrame(flight.values, columns=list(flight.feature_names))
        frame.insert(0, schema.distance_column, DISTANCE_GRID)
        written.append(write_csv(frame, out_dir / f'{flight.flight_id}.csv'))
        label_rows.append({
            schema.flight_id_column: flight.flight_id,
            schema.label_column: flight.label,
            schema.severity_column: flight.severity,
        })

    labels = pd.DataFrame(
        label_rows,
        columns=[schema.flight_id_column, schema.label_column, schema.severity_column],
    )
    written.append(write_csv(labels, out_dir / schema.labels_file))
    return written
