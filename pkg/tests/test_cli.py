from __future__ import annotations

import hashlib
from pathlib import Path

import pandas as pd
import pytest
import yaml

from precursormil import TrainedModel
from precursormil.cli import EXIT_CONFIG_ERROR, EXIT_MODULE_ERROR, EXIT_OK, main

TINY_MODEL = [
    '--epochs', '1',
    '--kernel-sizes', '3', '2', '2',
    '--channels', '2', '3', '2',
    '--gru-hidden', '4',
    '--minibatch-fraction', '0.25',
]


def run(*argv: str | Path) -> int:
    return main([str(a) for a in argv])


@pytest.fixture(scope='module')
def pipeline(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp('pipeline')
    assert run('synth', '--out', root / 'corpus', '--n-per-class', '12', '--num-features', '4',
               '--events', 'HighSpeed=1', '--seed', '5') == EXIT_OK
    assert run('preprocess', '--data', root / 'corpus', '--out', root / 'prepared', '--threshold', '1.0') == EXIT_OK
    assert run('train', '--data', root / 'prepared', '--event', 'HighSpeed', '--out', root / 'run',
               *TINY_MODEL) == EXIT_OK
    return root


def manifest(out: Path) -> dict:
    return yaml.safe_load((out / 'run_manifest.yaml').read_text())


def test_synth_output(pipeline):
    corpus = pipeline / 'corpus'
    assert len(list(corpus.glob('flight_*.csv'))) == 24
    labels = pd.read_csv(corpus / 'labels.csv')
    assert list(labels.columns) == ['flight_id', 'label', 'severity']
    assert set(labels['label']) == {'HighSpeed'}
    assert pd.read_csv(corpus / 'meta' / 'planted.csv')['feature'].tolist() == ['x01']
    assert sorted(p.name for p in corpus.glob('*.csv') if not p.name.startswith('flight_')) == ['labels.csv']


def test_preprocess_output(pipeline):
    prepared = pipeline / 'prepared'
    split = pd.read_csv(prepared / 'split.csv')
    assert len(split) == 24
    assert split['split'].value_counts().to_dict() == {'train': 16, 'valid': 4, 'test': 4}
    assert len(list((prepared / 'flights').glob('flight_*.csv'))) == 24
    assert (prepared / 'selection.csv').is_file()
    assert (prepared / 'corr.csv').is_file()


def test_train_output(pipeline):
    model = TrainedModel.load(pipeline / 'run' / 'model.json')
    assert model.classes == ('HighSpeed',)
    assert model.config.epochs == 1
    assert len(pd.read_csv(pipeline / 'run' / 'history.csv')) == 1


def test_manifest_lists_every_artifact(pipeline):
    out = pipeline / 'run'
    data = manifest(out)

    assert data['command'] == 'train'
    assert data['config']['model']['epochs'] == 1
    paths = {entry['path'] for entry in data['artifacts']}
    assert paths == {'model.json', 'history.csv'}
    for entry in data['artifacts']:
        assert entry['sha256'] == hashlib.sha256((out / entry['path']).read_bytes()).hexdigest()
        assert entry['manifest_hash'] == data['manifest_hash']


def test_evaluate(pipeline):
    out = pipeline / 'eval'
    assert run('evaluate', '--data', pipeline / 'prepared', '--model', pipeline / 'run' / 'model.json',
               '--out', out) == EXIT_OK

    cm = pd.read_csv(out / 'confusion.csv')
    assert list(cm['actual']) == ['Nominal', 'HighSpeed']
    assert cm[['predicted_Nominal', 'predicted_HighSpeed']].to_numpy().sum() == 4
    assert (out / 'metrics.csv').is_file()
    assert manifest(out)['command'] == 'evaluate'


def test_evaluate_with_the_combiner(pipeline):
    out = pipeline / 'eval_combined'
    model = pipeline / 'run' / 'model.json'
    assert run('evaluate', '--data', pipeline / 'prepared', '--model', f'HighSpeed={model}',
               '--split', 'all', '--out', out) == EXIT_OK
    assert pd.read_csv(out / 'confusion.csv')['actual'].tolist() == ['Nominal', 'HighSpeed']


def test_explain(pipeline):
    out = pipeline / 'explain'
    assert run('explain', '--data', pipeline / 'prepared', '--model', f'HighSpeed={pipeline / "run" / "model.json"}',
               '--svg', '--plot', 'x01', '--out', out) == EXIT_OK

    summary = pd.read_csv(out / 'summary.csv')
    assert len(summary) == 4
    for flight_id in summary['flight_id']:
        flight_dir = out / flight_id
        ranking = pd.read_csv(flight_dir / 'ranking.csv')
        assert list(ranking['rank']) == [1, 2, 3, 4]
        assert ranking['adjusted_score'].between(0.0, 0.5).all()
        temporal = pd.read_csv(flight_dir / 'temporal.csv')
        assert list(temporal.columns) == ['distance_nm', 'score_HighSpeed', 'in_window']
        assert len(temporal) == 81
        assert pd.read_csv(flight_dir / 'raw_scores.csv').shape == (81, 5)
        assert (flight_dir / 'temporal.svg').read_text().lstrip().startswith('<?xml')
        assert (flight_dir / 'envelope_x01.svg').is_file()

    scores = pd.read_csv(out / 'scores.csv')
    assert scores['score'].between(0.0, 1.0).all()
    assert manifest(out)['dfa_score_scale'] == 2.0


def test_explain_unknown_flight(pipeline, tmp_path):
    code = run('explain', '--data', pipeline / 'prepared', '--model', pipeline / 'run' / 'model.json',
               '--flight', 'no_such_flight', '--out', tmp_path / 'out')
    assert code == EXIT_CONFIG_ERROR


def test_gridsearch_is_reproducible(pipeline, tmp_path):
    config = tmp_path / 'grid.yaml'
    config.write_text(yaml.safe_dump({
        'grid': {
            'kernel_sizes': [[3, 2, 2]],
            'channels': [[2, 3, 2]],
            'learning_rate': [0.001],
            'weight_decay': [0.001],
        },
    }))
    for name in ('first', 'second'):
        assert run('gridsearch', '--config', config, '--data', pipeline / 'prepared', '--event', 'HighSpeed',
                   '--keep-checkpoints', '--out', tmp_path / name, *TINY_MODEL) == EXIT_OK

    first, second = tmp_path / 'first', tmp_path / 'second'
    assert (first / 'trials.csv').read_bytes() == (second / 'trials.csv').read_bytes()
    assert len(pd.read_csv(first / 'trials.csv')) == 1
    assert (first / 'best_model.json').is_file()
    assert (first / 'checkpoints' / 'trial_000.json').is_file()
    assert (first / 'trials.svg').is_file()
    checkpoint = Path('checkpoints') / 'trial_000.json'
    assert (first / checkpoint).read_bytes() == (second / checkpoint).read_bytes()


def test_missing_data_is_a_config_error(tmp_path):
    assert run('preprocess', '--data', tmp_path / 'absent', '--out', tmp_path / 'out') == EXIT_CONFIG_ERROR


def test_bad_config_file_is_a_config_error(tmp_path):
    config = tmp_path / 'run.yaml'
    config.write_text('model: {no_such_field: 1}\n')
    assert run('synth', '--config', config, '--out', tmp_path / 'out') == EXIT_CONFIG_ERROR


def test_missing_event_is_a_module_error(pipeline, tmp_path):
    code = run('train', '--data', pipeline / 'prepared', '--event', 'HighPathAngle', '--out', tmp_path / 'out',
               *TINY_MODEL)
    assert code == EXIT_MODULE_ERROR


def test_explain_is_reproducible(pipeline, tmp_path):
    model = pipeline / 'run' / 'model.json'
    for name in ('first', 'second'):
        assert run('explain', '--data', pipeline / 'prepared', '--model', model, '--out', tmp_path / name) == EXIT_OK
    for path in sorted((tmp_path / 'first').glob('*/ranking.csv')):
        assert path.read_bytes() == (tmp_path / 'second' / path.parent.name / 'ranking.csv').read_bytes()


def test_synth_output_feeds_preprocess(tmp_path):
    corpus = tmp_path / 'corpus'
    assert run('synth', '--out', corpus, '--n-per-class', '3', '--num-features', '2',
               '--events', 'HighSpeed=0', '--seed', '1') == EXIT_OK
    assert run('preprocess', '--data', corpus, '--out', tmp_path / 'prepared') == EXIT_OK
    assert len(pd.read_csv(tmp_path / 'prepared' / 'split.csv')) == 6


@pytest.mark.slow
def test_gridsearch_default_grid_writes_36_trials(pipeline, tmp_path):
    out = tmp_path / 'grid'
    assert run('gridsearch', '--data', pipeline / 'prepared', '--event', 'HighSpeed', '--out', out,
               *TINY_MODEL) == EXIT_OK

    trials = pd.read_csv(out / 'trials.csv')
    assert len(trials) == 36
    assert sorted(trials['trial_index']) == list(range(36))
    assert set(trials['kernel_sizes']) == {'8-5-3', '6-3-2'}
    assert len(pd.read_csv(out / 'trial_timings.csv')) == 36
