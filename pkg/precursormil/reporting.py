'''
Report files: per-flight precursor CSVs, fleet rankings, trial tables,
static SVG charts and the run manifest every output directory carries.
'''
from __future__ import annotations

import hashlib
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import yaml  # noqa: E402

from precursormil import __version__  # noqa: E402
from precursormil._io import FORMAT_VERSION, atomic_open, sha256_file, write_csv, write_text  # noqa: E402
from precursormil._model import to_plain  # noqa: E402
from precursormil._types import FloatArray, IntArray  # noqa: E402
from precursormil.flights import DISTANCE_GRID  # noqa: E402
from precursormil.precursors import FleetRanking, NominalEnvelope, PrecursorReport, window_onset_distance  # noqa: E402
from precursormil.training import TrialResult  # noqa: E402

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'run_manifest.yaml'
DFA_SCORE_SCALE = 2.0

# fixed ids and no timestamp, so equal figures are equal files
plt.rcParams['svg.hashsalt'] = 'precursormil'
_SVG_METADATA = {'Date': None, 'Creator': None}


# -- precursor reports -------------------------------------------------------


def _distance_for(length: int) -> FloatArray:
    return DISTANCE_GRID if length == DISTANCE_GRID.size else np.arange(length, dtype=np.float64)


def ranking_frame(report: PrecursorReport) -> pd.DataFrame:
    order = [report.feature_names.index(name) for name in report.ranking]
    return pd.DataFrame({
        'rank': np.arange(1, len(order) + 1),
        'feature': list(report.ranking),
        'adjusted_score': report.adjusted[order],
        'signed_deviation': report.signed[order],
    })


def temporal_frame(
    report: PrecursorReport,
    classifiers: Mapping[str, FloatArray] | None = None,
) -> pd.DataFrame:
    '''
    Distance plus one temporal score column per classifier.

    The report's own classifier comes first; `classifiers` adds the
    series of other event models for the same flight.
    '''
    length = report.temporal_scores.size
    in_window = np.zeros(length, dtype=bool)
    if report.window_found:
        in_window[report.window] = True
    frame = pd.DataFrame({
        'distance_nm': _distance_for(length),
        f'score_{report.event}': report.temporal_scores,
    })
    for event, series in sorted((classifiers or {}).items()):
        if event != report.event:
            frame[f'score_{event}'] = np.asarray(series, dtype=np.float64)
    frame['in_window'] = in_window.astype(int)
    return frame


def raw_scores_frame(report: PrecursorReport) -> pd.DataFrame:
    frame = pd.DataFrame(report.raw_scores, columns=list(report.feature_names))
    frame.insert(0, 'distance_nm', _distance_for(report.raw_scores.shape[0]))
    return frame


def write_report(
    report: PrecursorReport,
    out_dir: str | Path,
    classifiers: Mapping[str, FloatArray] | None = None,
) -> list[Path]:
    '''Write `ranking.csv`, `temporal.csv` and `raw_scores.csv` under `out_dir`.'''
    out_dir = Path(out_dir)
    return [
        write_csv(ranking_frame(report), out_dir / 'ranking.csv'),
        write_csv(temporal_frame(report, classifiers), out_dir / 'temporal.csv'),
        write_csv(raw_scores_frame(report), out_dir / 'raw_scores.csv'),
    ]


def report_summary(reports: Sequence[PrecursorReport]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                'flight_id': r.flight_id,
                'event': r.event,
                'window_found': r.window_found,
                'window_onset_nm': window_onset_distance(r),
                'top_feature': r.ranking[0] if r.ranking else None,
                'degenerate': r.degenerate,
            }
            for r in reports
        ],
        columns=['flight_id', 'event', 'window_found', 'window_onset_nm', 'top_feature', 'degenerate'],
    )


def fleet_frame(fleet: FleetRanking) -> pd.DataFrame:
    order = [fleet.feature_names.index(name) for name in fleet.ranking]
    return pd.DataFrame({
        'rank': np.arange(1, len(order) + 1),
        'feature': list(fleet.ranking),
        'mean_adjusted_score': fleet.mean_adjusted[order],
    })


def write_reference_scores(reports: Sequence[PrecursorReport], path: str | Path) -> Path:
    '''Normalized scores in the `flight_id,feature,score` reference layout.'''
    rows = [
        {'flight_id': r.flight_id, 'feature': name, 'score': score}
        for r in reports
        for name, score in r.normalized_scores().items()
    ]
    return write_csv(pd.DataFrame(rows, columns=['flight_id', 'feature', 'score']), path)


# -- charts ------------------------------------------------------------------


def _save_svg(fig: plt.Figure, path: str | Path) -> Path:
    with atomic_open(path, 'wb') as handle:
        fig.savefig(handle, format='svg', metadata=_SVG_METADATA, bbox_inches='tight')
    plt.close(fig)
    return Path(path)


def plot_temporal_scores(
    classifiers: Mapping[str, FloatArray],
    path: str | Path,
    *,
    threshold: float = 0.5,
    window: IntArray | None = None,
    title: str | None = None,
) -> Path:
    '''
    Temporal score of every classifier against distance, with the decision
    threshold and the precursor window shaded.
    '''
    fig, ax = plt.subplots(figsize=(7, 3.5))
    length = 0
    for event, series in sorted(classifiers.items()):
        series = np.asarray(series)
        length = series.size
        ax.plot(_distance_for(length), series, label=event)
    distance = _distance_for(length)
    if window is not None and len(window):
        ax.axvspan(distance[window[0]], distance[window[-1]], color='0.85', zorder=0)
    ax.axhline(threshold, color='k', linestyle='--', linewidth=0.8)
    ax.set_xlim(distance.max(initial=0.0), distance.min(initial=0.0))
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel('distance to 1,000 ft mark (nmi)')
    ax.set_ylabel('temporal score')
    if title:
        ax.set_title(title)
    ax.legend(loc='upper left')
    return _save_svg(fig, path)


def plot_feature_envelope(
    values: FloatArray,
    envelope: NominalEnvelope,
    feature: str,
    path: str | Path,
    *,
    width: float = 2.0,
    title: str | None = None,
) -> Path:
    '''One flight's feature against the nominal mean +/- `width` sigma band.'''
    i = envelope.feature_names.index(feature)
    distance = _distance_for(envelope.mean.shape[0])
    low, high = envelope.band(feature, width)

    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.fill_between(distance, low, high, color='tab:purple', alpha=0.25, linewidth=0)
    ax.plot(distance, envelope.mean[:, i], color='tab:purple', linewidth=0.8)
    ax.plot(distance, np.asarray(values), color='tab:red')
    ax.set_xlim(distance.max(), distance.min())
    ax.set_xlabel('distance to 1,000 ft mark (nmi)')
    ax.set_ylabel(feature)
    if title:
        ax.set_title(title)
    return _save_svg(fig, path)


def plot_trials(trials: Sequence[TrialResult], path: str | Path) -> Path:
    '''Validation F1 against DFA, one point per successful trial.'''
    done = [t for t in trials if t.ok and t.f1 is not None]
    fig, ax = plt.subplots(figsize=(5, 4))
    if any(t.dfa is not None for t in done):
        points = [(t.dfa, t.f1, t.trial_index) for t in done if t.dfa is not None]
        ax.set_xlabel('DFA')
    else:
        points = [(t.trial_index, t.f1, t.trial_index) for t in done]
        ax.set_xlabel('trial')
    for x, y, index in points:
        ax.scatter([x], [y], color='tab:blue', s=14)
        ax.annotate(str(index), (x, y), fontsize=6, xytext=(2, 2), textcoords='offset points')
    ax.set_ylabel('validation F1')
    return _save_svg(fig, path)


# -- run manifest ------------------------------------------------------------


def config_hash(config: Mapping[str, Any]) -> str:
    text = yaml.safe_dump(to_plain(dict(config)), sort_keys=True)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def write_manifest(
    out_dir: str | Path,
    *,
    command: str,
    config: Mapping[str, Any],
    seed: int,
    artifacts: Sequence[Path],
    extras: Mapping[str, Any] | None = None,
) -> Path:
    '''
    Write `run_manifest.yaml` with the resolved config, its hash and the
    SHA-256 of every artifact, listed relative to `out_dir`.
    '''
    out_dir = Path(out_dir)
    plain = to_plain(dict(config))
    digest = config_hash({'command': command, 'seed': seed, 'config': plain})
    listed = sorted({Path(p).resolve() for p in artifacts})
    manifest = {
        'format_version': FORMAT_VERSION,
        'package_version': __version__,
        'command': command,
        'seed': seed,
        'config': plain,
        'manifest_hash': digest,
        'artifacts': [
            {
                'path': path.relative_to(out_dir.resolve()).as_posix(),
                'sha256': sha256_file(path),
                'manifest_hash': digest,
            }
            for path in listed
        ],
    }
    if extras:
        manifest.update(to_plain(dict(extras)))
    path = write_text(out_dir / MANIFEST_NAME, yaml.safe_dump(manifest, sort_keys=False))
    logger.info('Wrote %s (%d artifacts, hash %s)', path, len(listed), digest[:12])
    return path
