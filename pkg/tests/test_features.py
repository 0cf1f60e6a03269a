from __future__ import annotations

import itertools

import numpy as np
import numpy.testing as npt
import pytest

from precursormil import (
    ConfigInvalid,
    ZeroVariance,
    apply_selection,
    compute_correlation,
    correlation_matrix,
    select_features,
)
from precursormil.features import CorrelationMatrix, write_selection


def matrix(features, rho) -> CorrelationMatrix:
    return CorrelationMatrix(features=tuple(features), rho=np.asarray(rho, dtype=float))


def test_perfect_positive_and_negative_correlation():
    x = np.arange(10, dtype=float)
    corr = correlation_matrix(np.column_stack([x, 3 * x + 1, -2 * x]), ['a', 'b', 'c'])
    assert corr.coefficient('a', 'b') == pytest.approx(1.0, abs=1e-12)
    assert corr.coefficient('a', 'c') == pytest.approx(-1.0, abs=1e-12)
    npt.assert_array_equal(corr.rho, corr.rho.T)
    npt.assert_array_equal(np.diag(corr.rho), 1.0)


def test_hand_computed_coefficient():
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    y = np.array([2.0, 1.0, 4.0, 3.0, 5.0])
    # sum((x-3)(y-3)) = 8, sum((x-3)^2) = sum((y-3)^2) = 10
    corr = correlation_matrix(np.column_stack([x, y]), ['x', 'y'])
    assert corr.coefficient('x', 'y') == pytest.approx(0.8, abs=1e-12)


def test_constant_feature_is_excluded_or_rejected(caplog):
    values = np.column_stack([np.arange(5.0), np.full(5, 7.0)])
    corr = correlation_matrix(values, ['a', 'flat'])
    assert corr.features == ('a',)
    assert corr.constant == ('flat',)
    assert 'flat' in caplog.text
    with pytest.raises(ZeroVariance):
        correlation_matrix(values, ['a', 'flat'], strict=True)


def test_greedy_keeps_the_earlier_feature():
    corr = matrix('abc', [[1.0, 0.95, 0.1], [0.95, 1.0, 0.2], [0.1, 0.2, 1.0]])
    result = select_features(corr)
    assert result.kept == ('a', 'c')
    assert [(r.name, r.kept_partner) for r in result.removed] == [('b', 'a')]


def test_negative_correlation_is_deduplicated():
    corr = matrix('ab', [[1.0, -0.93], [-0.93, 1.0]])
    assert select_features(corr).kept == ('a',)


def test_removed_feature_is_not_a_partner():
    # b goes because of a; c only correlates with b, so c stays
    corr = matrix('abc', [[1.0, 0.95, 0.5], [0.95, 1.0, 0.95], [0.5, 0.95, 1.0]])
    assert select_features(corr).kept == ('a', 'c')


def test_trivial_features_never_act_as_partners():
    corr = matrix('abc', [[1.0, 0.99, 0.0], [0.99, 1.0, 0.0], [0.0, 0.0, 1.0]])
    result = select_features(corr, trivial=['a'])
    assert result.kept == ('b', 'c')
    assert result.excluded_trivial == ('a',)


def test_threshold_must_be_in_unit_interval():
    corr = matrix('a', [[1.0]])
    with pytest.raises(ConfigInvalid):
        select_features(corr, threshold=0.0)
    with pytest.raises(ConfigInvalid):
        select_features(corr, threshold=1.5)


def brute_force(features, rho, threshold):
    '''Largest feature-order-first subset walk, checked pairwise.'''
    kept: list[int] = []
    for i in range(len(features)):
        if all(abs(rho[i, j]) < threshold for j in kept):
            kept.append(i)
    # the result must be independent and every dropped feature covered
    for i, j in itertools.combinations(kept, 2):
        assert abs(rho[i, j]) < threshold
    for i in set(range(len(features))) - set(kept):
        assert any(abs(rho[i, j]) >= threshold for j in kept if j < i)
    return tuple(features[i] for i in kept)


@pytest.mark.parametrize('seed', range(20))
def test_selection_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 13))
    latent = rng.normal(size=(200, 3))
    values = latent @ rng.normal(size=(3, d)) + 0.2 * rng.normal(size=(200, d))
    names = [f'f{i}' for i in range(d)]
    corr = correlation_matrix(values, names)

    assert select_features(corr, 0.9).kept == brute_force(names, corr.rho, 0.9)


def test_apply_selection_projects_in_kept_order(small_flights, tmp_path):
    corr = compute_correlation(small_flights)
    result = select_features(corr, 0.9)
    projected = apply_selection(small_flights, result)

    assert projected[0].feature_names == result.kept
    assert projected[0].values.shape == (81, len(result.kept))
    assert write_selection(result, tmp_path / 'selection.csv').read_text().startswith('feature,status')
