from __future__ import annotations

import numpy as np
import numpy.testing as npt
import pytest

from precursormil import (
    NOMINAL,
    EmptyInput,
    FlightDataset,
    PrecursorError,
    TooFewFlights,
    build_binary,
)
from precursormil.model import ForwardTrace
from precursormil.precursors import (
    adjusted_scores,
    build_report,
    explain_flights,
    extract,
    fleet_aggregate,
    find_window,
    nominal_envelope,
    rank_features,
    signed_scores,
    window_onset_distance,
)

NAMES = ('alt', 'ias', 'pitch')


def make_trace(raw, temporal) -> ForwardTrace:
    raw = np.asarray(raw, dtype=float)[None]
    temporal = np.asarray(temporal, dtype=float)[None]
    return ForwardTrace(raw_scores=raw, temporal_scores=temporal, bag_prob=temporal.max(axis=1))


def report_with(adjusted, flight_id='f', event='HighSpeed'):
    raw = np.tile(0.5 + np.asarray(adjusted), (81, 1))
    return build_report(make_trace(raw, np.full(81, 0.9)), 0, flight_id, NAMES, event)


def test_adjusted_score_examples():
    window = np.arange(4)
    raw = np.column_stack([
        np.full(4, 0.5),
        np.full(4, 1.0),
        np.array([0.3, 0.7, 0.3, 0.7]),
    ])
    adjusted = adjusted_scores(raw, window)
    assert adjusted[0] == 0.0
    assert adjusted[1] == 0.5
    assert adjusted[2] == pytest.approx(0.2)
    npt.assert_allclose(signed_scores(raw, window), [0.0, 0.5, 0.0], atol=1e-12)


def test_adjusted_scores_are_bounded(rng):
    for _ in range(10_000):
        raw = rng.uniform(size=(16, 4))
        window = np.flatnonzero(rng.uniform(size=16) > 0.5)
        if window.size == 0:
            continue
        adjusted = adjusted_scores(raw, window)
        assert np.all((adjusted >= 0.0) & (adjusted <= 0.5))


def test_empty_window_is_rejected():
    with pytest.raises(PrecursorError):
        adjusted_scores(np.full((3, 2), 0.5), np.array([], dtype=int))


def test_window_covering_everything():
    window, found = find_window(np.full(81, 0.9))
    npt.assert_array_equal(window, np.arange(81))
    assert found


def test_window_falls_back_to_the_full_range():
    window, found = find_window(np.full(81, 0.1))
    npt.assert_array_equal(window, np.arange(81))
    assert not found


def test_window_after_a_late_crossing():
    scores = np.concatenate([np.linspace(0.0, 0.49, 75), np.linspace(0.5, 0.95, 6)])
    window, found = find_window(scores)
    npt.assert_array_equal(window, np.arange(75, 81))
    assert found


def test_ranking_breaks_ties_by_name():
    assert rank_features(['c', 'a', 'b'], np.array([0.1, 0.1, 0.3])) == ('b', 'a', 'c')


def test_ranking_survives_monotone_transforms(rng):
    scores = rng.uniform(0.0, 0.5, size=6)
    names = [f'f{i}' for i in range(6)]
    assert rank_features(names, scores) == rank_features(names, np.exp(3.0 * scores) + 1.0)


def test_report_from_a_trace():
    raw = np.full((81, 3), 0.5)
    raw[75:, 1] = 0.9
    raw[75:, 2] = 0.2
    temporal = np.concatenate([np.full(75, 0.1), np.full(6, 0.8)])
    report = build_report(make_trace(raw, temporal), 0, 'f1', NAMES, 'HighSpeed')

    assert report.window_found
    npt.assert_array_equal(report.window, np.arange(75, 81))
    assert report.ranking == ('ias', 'pitch', 'alt')
    assert report.score_of('ias') == pytest.approx(0.4)
    assert report.rank_of('alt') == 3
    assert report.normalized_scores()['ias'] == pytest.approx(0.8)
    assert report.signed[2] == pytest.approx(-0.3)
    assert window_onset_distance(report) == pytest.approx(1.25)
    assert not report.degenerate


def test_all_neutral_scores_are_flagged(caplog):
    report = build_report(make_trace(np.full((81, 3), 0.5), np.full(81, 0.2)), 0, 'f1', NAMES, 'HighSpeed')
    assert report.degenerate
    assert not report.window_found
    assert window_onset_distance(report) is None
    assert 'degenerate' in caplog.text


def test_multiple_output_traces_need_a_class():
    trace = ForwardTrace(
        raw_scores=np.full((1, 81, 3), 0.5),
        temporal_scores=np.full((1, 81, 2), 0.7),
        bag_prob=np.full((1, 2), 0.7),
    )
    with pytest.raises(PrecursorError):
        extract(trace, 0)
    raw, temporal = extract(trace, 0, class_index=1)
    assert raw.shape == (81, 3)
    assert temporal.shape == (81,)


def test_fleet_mean_and_ranking():
    fleet = fleet_aggregate([report_with([0.1, 0.0, 0.2]), report_with([0.3, 0.0, 0.1])])
    npt.assert_allclose(fleet.mean_adjusted, [0.2, 0.0, 0.15])
    assert fleet.ranking == ('alt', 'pitch', 'ias')
    assert fleet.num_flights == 2


def test_fleet_of_one_is_that_flight():
    report = report_with([0.05, 0.4, 0.2])
    fleet = fleet_aggregate([report])
    npt.assert_array_equal(fleet.mean_adjusted, report.adjusted)
    assert fleet.ranking == report.ranking


def test_fleet_inputs_are_checked():
    with pytest.raises(EmptyInput):
        fleet_aggregate([])
    with pytest.raises(PrecursorError):
        fleet_aggregate([report_with([0.1, 0.1, 0.1]), report_with([0.1, 0.1, 0.1], event='HighPathAngle')])


def dataset_of(values, labels) -> FlightDataset:
    values = np.asarray(values, dtype=float)
    return FlightDataset(
        values=values,
        flight_ids=tuple(f'f{i}' for i in range(len(labels))),
        labels=tuple(labels),
        feature_names=NAMES[:values.shape[2]],
    )


def test_envelope_uses_nominal_flights_and_sample_std(rng):
    v = rng.normal(size=(81, 2))
    dataset = dataset_of([v, v + 2.0, v + 100.0], [NOMINAL, NOMINAL, 'HighSpeed'])
    envelope = nominal_envelope(dataset)

    npt.assert_allclose(envelope.mean, v + 1.0)
    npt.assert_allclose(envelope.std, np.sqrt(2.0))
    low, high = envelope.band('ias')
    npt.assert_allclose(high - low, 4.0 * np.sqrt(2.0))


def test_envelope_of_identical_flights_is_flat(rng):
    v = rng.normal(size=(81, 1))
    envelope = nominal_envelope(dataset_of([v, v, v], [NOMINAL] * 3))
    npt.assert_allclose(envelope.std, 0.0, atol=1e-12)
    assert envelope.mean.shape == (81, 1)


def test_envelope_needs_two_nominal_flights(rng):
    with pytest.raises(TooFewFlights):
        nominal_envelope(dataset_of(rng.normal(size=(2, 81, 1)), [NOMINAL, 'HighSpeed']))


def test_explain_flights_matches_the_trace(tiny_config, small_dataset):
    model = build_binary(tiny_config, small_dataset.num_features, small_dataset.length,
                         event='HighSpeed', feature_names=small_dataset.feature_names)
    reports = explain_flights(model, small_dataset)
    trace = model.trace(small_dataset.values)

    assert [r.flight_id for r in reports] == list(small_dataset.flight_ids)
    for i, report in enumerate(reports):
        assert trace.bag_prob[i] == report.temporal_scores.max()
        assert set(report.ranking) == set(small_dataset.feature_names)
        assert np.all((report.adjusted >= 0.0) & (report.adjusted <= 0.5))
