from __future__ import annotations

from pathlib import Path

import pytest

from precursormil import ConfigInvalid, ModelConfig, RunConfig, create_run_config


def write_yaml(path: Path, text: str) -> Path:
    path.write_text(text, encoding='utf-8')
    return path


def test_defaults():
    config = RunConfig()
    assert config.model == ModelConfig()
    assert config.keep_severities == (0, 3)
    assert config.correlation_threshold == 0.9
    assert config.split.train == 0.7


def test_nested_sections_from_yaml(tmp_path):
    path = write_yaml(tmp_path / 'run.yaml', '''
data: corpus
event: HighSpeed
trivial_features: [lat, lon]
model:
  epochs: 3
  kernel_sizes: [6, 3, 2]
split:
  train: 0.6
  valid: 0.2
  test: 0.2
grid:
  learning_rate: [0.001]
  channels: [[10, 15, 20]]
synth:
  n_flights: {Nominal: 5, HighSpeed: 5}
  num_features: 4
  planted:
    - {label: HighSpeed, feature: 1, onset_nm: 5.0, amplitude: 2.0}
''')
    config = RunConfig.from_file(path)

    assert config.data == Path('corpus')
    assert config.trivial_features == ('lat', 'lon')
    assert config.model.kernel_sizes == (6, 3, 2)
    assert config.model.epochs == 3
    assert config.split.valid == 0.2
    assert config.grid == {'learning_rate': [0.001], 'channels': [(10, 15, 20)]}
    assert config.synth.planted[0].feature == 1


def test_top_level_seed_reaches_sections(tmp_path):
    config = RunConfig.from_file(write_yaml(tmp_path / 'run.yaml', 'seed: 7\nmodel: {seed: 2}\n'))
    assert config.seed == 7
    assert config.model.seed == 2
    assert config.split.seed == 7


@pytest.mark.parametrize('text', [
    'unknown_key: 1\n',
    'model: {kernel_size: [8, 5, 3]}\n',
    'grid: {momentum: [0.9]}\n',
    'grid: {learning_rate: []}\n',
    '- just\n- a list\n',
    'model: [unclosed\n',
    'correlation_threshold: 0.0\n',
    'jobs: 0\n',
])
def test_bad_files_are_rejected(tmp_path, text):
    with pytest.raises(ConfigInvalid):
        RunConfig.from_file(write_yaml(tmp_path / 'run.yaml', text))


def test_missing_file_is_rejected(tmp_path):
    with pytest.raises(ConfigInvalid):
        RunConfig.from_file(tmp_path / 'absent.yaml')


def test_flags_override_the_file(tmp_path):
    path = write_yaml(tmp_path / 'run.yaml', 'event: HighSpeed\nmodel: {epochs: 3}\n')
    config = create_run_config(path, {
        'event': 'HighPathAngle',
        'seed': 4,
        'model.epochs': 9,
        'model.learning_rate': None,
        'split.seed': 1,
    })

    assert config.event == 'HighPathAngle'
    assert config.model.epochs == 9
    assert config.model.seed == 4
    assert config.split.seed == 1
    assert config.model.learning_rate == ModelConfig().learning_rate


def test_unknown_override_section():
    with pytest.raises(ConfigInvalid):
        RunConfig().with_overrides({'synth.seed': 1})


def test_filter_policy_and_requirements():
    config = RunConfig(keep_severities=[3], keep_labels=['Nominal', 'HighSpeed'])
    policy = config.filter_policy()
    assert policy.keep_severities == frozenset({3})
    assert policy.keep_labels == frozenset({'Nominal', 'HighSpeed'})
    with pytest.raises(ConfigInvalid):
        config.require('event')


def test_path_checks(tmp_path):
    RunConfig(data=tmp_path, out=tmp_path / 'new').check_paths()
    with pytest.raises(ConfigInvalid):
        RunConfig(data=tmp_path / 'absent').check_paths()
    (tmp_path / 'file').write_text('x')
    with pytest.raises(ConfigInvalid):
        RunConfig(out=tmp_path / 'file').check_paths()
