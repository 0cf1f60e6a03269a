from __future__ import annotations

import numpy as np
import numpy.testing as npt
import pytest

from precursormil import DISTANCE_GRID, NOMINAL, SpecInvalid, build_dataset, load_flights, resample_all
from precursormil.synth import (
    PlantedPrecursor,
    SynthSpec,
    create_spec,
    generate,
    nominal_sigma,
    planted_table,
    ramp,
    write_corpus,
)


def class_means(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dataset = build_dataset(resample_all(generate(spec)))
    labels = np.array(dataset.labels)
    nominal = dataset.values[labels == NOMINAL].mean(axis=0)
    positive = dataset.values[labels != NOMINAL].mean(axis=0)
    return nominal, positive, nominal_sigma(spec)


@pytest.fixture(scope='module')
def planted_means():
    return class_means(create_spec(n_per_class=500, seed=11))


def test_ramp_shape():
    npt.assert_allclose(ramp(np.array([6.0, 5.0, 4.5, 4.0, 0.0]), 5.0), [0.0, 0.0, 0.5, 1.0, 1.0], atol=1e-12)


def test_same_seed_same_corpus():
    spec = create_spec(n_per_class=5, num_features=3, events={'HighSpeed': 1}, seed=2)
    first, second = generate(spec), generate(spec)
    assert [r.flight_id for r in first] == [r.flight_id for r in second]
    for a, b in zip(first, second, strict=True):
        npt.assert_array_equal(a.distance_to_ref, b.distance_to_ref)
        for name in a.series:
            npt.assert_array_equal(a.series[name], b.series[name])
    other = generate(create_spec(n_per_class=5, num_features=3, events={'HighSpeed': 1}, seed=3))
    assert not np.array_equal(first[0].series['x00'], other[0].series['x00'])


def test_corpus_layout():
    records = generate(create_spec(n_per_class=4, num_features=2, events={'HighSpeed': 0, 'HighPathAngle': 1}))
    assert [r.label for r in records] == [NOMINAL] * 4 + ['HighPathAngle'] * 4 + ['HighSpeed'] * 4
    assert records[4].severity == 3 and records[4].events == (('HighPathAngle', 3),)
    assert records[0].feature_names == ('x00', 'x01')
    assert records[0].distance_to_ref[0] > 20.0 and records[0].distance_to_ref[-1] == 0.0


@pytest.mark.parametrize('changes', [
    {'planted': ({'label': NOMINAL, 'feature': 0, 'onset_nm': 5.0, 'amplitude': 1.0},)},
    {'planted': (PlantedPrecursor('HighSpeed', 12, 5.0, 1.0),)},
    {'planted': (PlantedPrecursor('HighSpeed', 0, 0.0, 1.0),)},
    {'planted': (PlantedPrecursor('HighSpeed', 0, 25.0, 1.0),)},
    {'planted': (PlantedPrecursor('HighSpeed', 0, 5.0, -1.0),)},
    {'planted': ()},
    {'noise_std': 0.0},
    {'correlation': 1.0},
    {'length': 80},
])
def test_invalid_specs(changes):
    with pytest.raises(SpecInvalid):
        SynthSpec(**changes)


def test_planted_shift_after_onset(planted_means):
    nominal, positive, sigma = planted_means
    shift = (positive - nominal)[:, 3] / sigma[3]
    held = DISTANCE_GRID <= 4.0
    before = DISTANCE_GRID >= 5.0

    assert np.abs(shift[held] - 4.0).max() < 0.5
    assert shift[held].mean() == pytest.approx(4.0, abs=0.2)
    assert np.abs(shift[before]).max() < 0.5


def test_other_features_match_across_classes(planted_means):
    nominal, positive, sigma = planted_means
    gap = (positive - nominal) / sigma
    others = [i for i in range(gap.shape[1]) if i != 3]
    assert np.abs(gap[:, others].mean(axis=0)).max() < 0.2


def test_zero_amplitude_is_indistinguishable():
    nominal, positive, sigma = class_means(create_spec(n_per_class=300, amplitude=0.0, seed=4))
    assert np.abs(((positive - nominal) / sigma).mean(axis=0)).max() < 0.2


def test_correlation_knob_links_unplanted_features():
    spec = create_spec(n_per_class=200, num_features=4, events={'HighSpeed': 3}, correlation=0.8, seed=6)
    dataset = build_dataset(resample_all(generate(spec)))
    residual = dataset.values - dataset.values.mean(axis=0)
    flat = residual.reshape(-1, 4)
    rho = np.corrcoef(flat, rowvar=False)

    assert rho[0, 1] == pytest.approx(0.8, abs=0.05)
    assert abs(rho[0, 3]) < 0.2


def test_written_corpus_loads_back(tmp_path):
    spec = create_spec(n_per_class=3, num_features=2, events={'HighSpeed': 1}, seed=1)
    records = generate(spec)
    write_corpus(records, tmp_path)
    loaded = load_flights(tmp_path)

    assert [r.flight_id for r in loaded] == [r.flight_id for r in records]
    assert [r.label for r in loaded] == [r.label for r in records]
    npt.assert_allclose(loaded[-1].series['x01'], records[-1].series['x01'], rtol=0, atol=0)
    assert list(planted_table(spec).itertuples(index=False, name=None)) == [('HighSpeed', 'x01', 5.0, 4.0)]


@pytest.mark.parametrize(('num_features', 'planted'), [(1, 0), (3, 2), (4, 3), (12, 3)])
def test_default_event_fits_any_feature_count(num_features, planted):
    spec = create_spec(n_per_class=2, num_features=num_features)
    assert [(p.label, p.feature) for p in spec.planted] == [('HighSpeed', planted)]
