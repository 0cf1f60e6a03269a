'''
Command line entry point.

    precursormil synth      --out corpus/
    precursormil preprocess --data corpus/ --out prepared/
    precursormil train      --data prepared/ --event HighSpeed --out run/
    precursormil gridsearch --data prepared/ --event HighSpeed --jobs 4 --out grid/
    precursormil evaluate   --data prepared/ --model run/model.json --out eval/
    precursormil explain    --data prepared/ --model HighSpeed=run/model.json --out explain/

Every command writes `run_manifest.yaml` next to its outputs.
'''
from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from precursormil._exceptions import ConfigInvalid, PrecursorMilError
from precursormil._io import write_csv
from precursormil.config import RunConfig, create_run_config
from precursormil.dataset import FlightDataset, build_dataset
from precursormil.evaluation import classification_report, confusion, load_reference_scores, write_confusion, write_metrics
from precursormil.features import apply_selection, compute_correlation, select_features, write_correlation, write_selection
from precursormil.flights import NOMINAL, filter_by_policy, load_flights, resample_all, write_resampled
from precursormil.model import ForwardTrace, TrainedModel, build_binary, build_multi_output, combine_binary
from precursormil.precursors import PrecursorReport, build_report, fleet_aggregate, nominal_envelope
from precursormil.reporting import (
    DFA_SCORE_SCALE,
    fleet_frame,
    plot_feature_envelope,
    plot_temporal_scores,
    plot_trials,
    report_summary,
    write_manifest,
    write_reference_scores,
    write_report,
)
from precursormil.synth import create_spec, generate, write_corpus, write_planted
from precursormil.training import (
    SplitAssignment,
    evaluate_model,
    grid_search,
    split_dataset,
    stratified_split,
    summarize,
    train,
    write_timings,
    write_trials,
)

logger = logging.getLogger('precursormil')

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
EXIT_OK = 0
EXIT_MODULE_ERROR = 1
EXIT_CONFIG_ERROR = 2

_RUN_KEYS = frozenset(RunConfig.get_field_names())

Handler = Callable[[RunConfig, argparse.Namespace], list[Path]]


def configure_logging(verbosity: int = 0) -> None:
    '''WARNING for -q, INFO by default, DEBUG for -v.'''
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


# -- shared loading ----------------------------------------------------------


def _parse_assignments(values: Sequence[str] | None, what: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for item in values or ():
        key, sep, value = item.partition('=')
        if not sep or not key or not value:
            raise ConfigInvalid(what, f'`{item}` is not of the form NAME=VALUE')
        out[key] = value
    return out


def _model_paths(values: Sequence[str] | None) -> dict[str | None, Path]:
    '''`PATH` for one model, `EVENT=PATH` pairs for the combiner.'''
    if not values:
        raise ConfigInvalid('model', 'at least one --model is required')
    if len(values) == 1 and '=' not in values[0]:
        paths: dict[str | None, Path] = {None: Path(values[0])}
    else:
        paths = {event: Path(path) for event, path in _parse_assignments(values, 'model').items()}
    for path in paths.values():
        if not path.is_file():
            raise ConfigInvalid('model', f'`{path}` is not a file')
    return paths


def _load_models(values: Sequence[str] | None) -> dict[str, TrainedModel]:
    models: dict[str, TrainedModel] = {}
    for event, path in _model_paths(values).items():
        model = TrainedModel.load(path)
        if event is None:
            key = model.event if model.kind == 'binary' else 'multi_output'
        else:
            if model.kind != 'binary' or model.event != event:
                raise ConfigInvalid('model', f'`{path}` is not a binary model for `{event}`')
            key = event
        models[key] = model
    return models


def _read_split(path: Path, dataset: FlightDataset, config: RunConfig) -> SplitAssignment:
    frame = pd.read_csv(path, dtype=str)
    tags = dict(zip(frame['flight_id'], frame['split'], strict=True))
    missing = [f for f in dataset.flight_ids if f not in tags]
    if missing:
        raise ConfigInvalid('data', f'{len(missing)} flight(s) have no entry in `{path}`')
    return SplitAssignment(tags=tuple(tags[f] for f in dataset.flight_ids), fractions=config.split)  # type: ignore[misc]


def _load_prepared(config: RunConfig) -> tuple[FlightDataset, SplitAssignment]:
    '''
    Dataset and split from a `preprocess` output directory, or from raw
    flight files when the directory holds no `flights/` subfolder.
    '''
    config.require('data')
    root = config.data
    assert root is not None
    source = root / 'flights' if (root / 'flights').is_dir() else root
    records = filter_by_policy(load_flights(source, strict=config.strict), config.filter_policy())
    dataset = build_dataset(resample_all(records, strict=config.strict))
    split_file = root / 'split.csv'
    if split_file.is_file():
        return dataset, _read_split(split_file, dataset, config)
    return dataset, stratified_split(dataset, config.split)


def _split_view(dataset: FlightDataset, assignment: SplitAssignment, name: str) -> FlightDataset:
    if name == 'all':
        return dataset
    return dataset.subset(assignment.indices(name))  # type: ignore[arg-type]


def _progress(args: argparse.Namespace) -> bool:
    return args.verbose >= 0 and sys.stderr.isatty()


# -- commands ----------------------------------------------------------------


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> list[Path]:
    if config.synth is not None:
        spec = config.synth if args.seed is None else config.synth.copy_with(seed=config.seed)
    else:
        events = {k: int(v) for k, v in _parse_assignments(args.events, 'events').items()} or None
        spec = create_spec(
            n_per_class=args.n_per_class,
            num_features=args.num_features,
            events=events,
            onset_nm=args.onset,
            amplitude=args.amplitude,
            correlation=args.correlation,
            seed=config.seed,
        )
    out = config.out
    assert out is not None
    written = write_corpus(generate(spec), out)
    written.append(write_planted(spec, out))
    return written


def cmd_preprocess(config: RunConfig, args: argparse.Namespace) -> list[Path]:
    config.require('data')
    out = config.out
    assert out is not None and config.data is not None
    records = filter_by_policy(load_flights(config.data, strict=config.strict), config.filter_policy())
    flights = resample_all(records, strict=config.strict)

    corr = compute_correlation(flights)
    selection = select_features(corr, config.correlation_threshold, config.trivial_features)
    selected = apply_selection(flights, selection)

    assignment = stratified_split([f.label for f in selected], config.split)
    split = pd.DataFrame({'flight_id': [f.flight_id for f in selected], 'split': list(assignment.tags)})

    written = write_resampled(selected, out / 'flights')
    written.append(write_selection(selection, out / 'selection.csv'))
    written.append(write_correlation(corr, out / 'corr.csv'))
    written.append(write_csv(split, out / 'split.csv'))
    return written


def _training_sets(
    config: RunConfig,
    args: argparse.Namespace,
) -> tuple[FlightDataset, FlightDataset, tuple[str, ...]]:
    dataset, assignment = _load_prepared(config)
    train_set, valid_set, _ = split_dataset(dataset, assignment)
    if args.multi_output:
        classes = config.classes or dataset.classes
        return train_set.with_labels(classes), valid_set.with_labels(classes), tuple(classes)
    config.require('event')
    assert config.event is not None
    return train_set.binary_view(config.event), valid_set.binary_view(config.event), (config.event,)


def cmd_train(config: RunConfig, args: argparse.Namespace) -> list[Path]:
    train_set, valid_set, classes = _training_sets(config, args)
    if args.multi_output:
        model = build_multi_output(
            config.model, train_set.num_features, train_set.length, len(classes),
            classes=classes, feature_names=train_set.feature_names,
        )
    else:
        model = build_binary(
            config.model, train_set.num_features, train_set.length,
            event=classes[0], feature_names=train_set.feature_names,
        )
    train(model, train_set, valid_set, config.model, progress=_progress(args))

    out = config.out
    assert out is not None
    history = pd.DataFrame(model.history, columns=['epoch', 'train_loss', 'valid_f1'])
    return [
        model.save(out / 'model.json'),
        write_csv(history.astype(object).where(history.notna(), 'undefined'), out / 'history.csv'),
    ]


def cmd_gridsearch(config: RunConfig, args: argparse.Namespace) -> list[Path]:
    train_set, valid_set, classes = _training_sets(config, args)
    reference = load_reference_scores(config.reference) if config.reference is not None else None
    out = config.out
    assert out is not None

    result = grid_search(
        train_set,
        valid_set,
        event=None if args.multi_output else classes[0],
        classes=classes if args.multi_output else None,
        axes=config.grid,
        base_config=config.model,
        reference=reference,
        jobs=config.jobs,
        checkpoint_dir=out / 'checkpoints' if args.keep_checkpoints else None,
        progress=_progress(args),
    )
    written = [
        write_trials(result.trials, out / 'trials.csv'),
        write_timings(result.trials, out / 'trial_timings.csv'),
        plot_trials(result.trials, out / 'trials.svg'),
    ]
    if result.best_model is not None:
        written.append(result.best_model.save(out / 'best_model.json'))
        logger.info('Best trial %d with F1 %s', result.trials[0].trial_index, result.trials[0].f1)
    else:
        logger.warning('Every trial failed; no best model written')
    if args.keep_checkpoints:
        written.extend(t.checkpoint for t in result.trials if t.checkpoint is not None)
    return written


def cmd_evaluate(config: RunConfig, args: argparse.Namespace) -> list[Path]:
    models = _load_models(args.models)
    dataset, assignment = _load_prepared(config)
    subset = _split_view(dataset, assignment, args.split_name)
    out = config.out
    assert out is not None

    if len(models) == 1:
        (model,) = models.values()
        view = subset.binary_view(model.event) if model.kind == 'binary' else subset.with_labels(model.classes)
        cm = evaluate_model(model, view)
        logger.info('F1 %s on %d flight(s)', summarize(model, cm).f1, len(view))
    else:
        classes = (NOMINAL, *sorted(models))
        view = subset.with_labels(classes)
        combined = combine_binary(models, view.values, config.model.decision_threshold)
        cm = confusion(view.labels, combined.predictions, classes)
    logger.info('\n%s', classification_report(cm).to_string(index=False))
    return [write_confusion(cm, out / 'confusion.csv'), write_metrics(cm, out / 'metrics.csv')]


def _explain_binary(
    models: dict[str, TrainedModel],
    subset: FlightDataset,
) -> tuple[list[PrecursorReport], dict[str, ForwardTrace], tuple[str, ...]]:
    traces = {event: model.trace(subset.values) for event, model in models.items()}
    threshold = next(iter(models.values())).threshold
    if len(models) == 1:
        (event,) = models
        winners = (event,) * len(subset)
    else:
        probs = np.column_stack([traces[e].bag_prob for e in sorted(models)])
        combined = combine_binary(models, subset.values, threshold)
        # a flight predicted Nominal is explained by its most confident classifier
        fallback = [sorted(models)[int(i)] for i in np.argmax(probs, axis=1)]
        winners = tuple(p if p != NOMINAL else f for p, f in zip(combined.predictions, fallback, strict=True))

    reports = [
        build_report(traces[event], i, flight_id, models[event].feature_names, event)
        for i, (flight_id, event) in enumerate(zip(subset.flight_ids, winners, strict=True))
    ]
    return reports, traces, winners


def _explain_multi_output(
    model: TrainedModel,
    subset: FlightDataset,
) -> tuple[list[PrecursorReport], dict[str, ForwardTrace], tuple[str, ...]]:
    trace = model.trace(subset.values)
    winners = tuple(model.classes[int(i)] for i in np.argmax(trace.bag_prob, axis=1))
    reports = [
        build_report(
            trace, i, flight_id, model.feature_names, event,
            class_index=model.classes.index(event),
        )
        for i, (flight_id, event) in enumerate(zip(subset.flight_ids, winners, strict=True))
    ]
    traces = {
        name: _class_trace(trace, j) for j, name in enumerate(model.classes)
    }
    return reports, traces, winners


def _class_trace(trace: ForwardTrace, class_index: int) -> ForwardTrace:
    return trace.copy_with(
        temporal_scores=trace.temporal_scores[:, :, class_index],
        bag_prob=trace.bag_prob[:, class_index],
    )


def cmd_explain(config: RunConfig, args: argparse.Namespace) -> list[Path]:
    models = _load_models(args.models)
    dataset, assignment = _load_prepared(config)
    subset = _split_view(dataset, assignment, args.split_name)
    if args.flight:
        unknown = [f for f in args.flight if f not in subset.flight_ids]
        if unknown:
            raise ConfigInvalid('flight', f'{unknown} not in the {args.split_name} split')
        subset = subset.subset([subset.index_of(f) for f in args.flight])
    out = config.out
    assert out is not None

    if 'multi_output' in models:
        reports, traces, winners = _explain_multi_output(models['multi_output'], subset)
    else:
        reports, traces, winners = _explain_binary(models, subset)

    envelope = None
    if args.plot:
        train_set = _split_view(dataset, assignment, 'train')
        envelope = nominal_envelope(train_set)

    written: list[Path] = []
    for i, report in enumerate(reports):
        flight_dir = out / report.flight_id
        classifiers = {event: trace.temporal_scores[i] for event, trace in traces.items()}
        written.extend(write_report(report, flight_dir, classifiers))
        if args.svg:
            written.append(plot_temporal_scores(
                classifiers, flight_dir / 'temporal.svg',
                threshold=traces[report.event].threshold,
                window=report.window if report.window_found else None,
                title=f'{report.flight_id} ({report.event})',
            ))
        if envelope is not None:
            for feature in args.plot:
                values = subset.values[i, :, subset.feature_names.index(feature)]
                written.append(plot_feature_envelope(
                    values, envelope, feature, flight_dir / f'envelope_{feature}.svg',
                    title=f'{report.flight_id}: {feature}',
                ))

    for event in sorted(set(winners) - {NOMINAL}):
        positives = [
            r for r, label, win in zip(reports, subset.labels, winners, strict=True)
            if label == event and win == event and r.window_found
        ]
        if positives:
            written.append(write_csv(fleet_frame(fleet_aggregate(positives)), out / f'fleet_{event}.csv'))
    written.append(write_csv(report_summary(reports), out / 'summary.csv'))
    written.append(write_reference_scores(reports, out / 'scores.csv'))
    return written


COMMANDS: dict[str, Handler] = {
    'synth': cmd_synth,
    'preprocess': cmd_preprocess,
    'train': cmd_train,
    'gridsearch': cmd_gridsearch,
    'evaluate': cmd_evaluate,
    'explain': cmd_explain,
}


# -- parser ------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', type=Path, help='YAML run config; flags override its values')
    parent.add_argument('--seed', type=int)
    parent.add_argument('--out', type=Path, required=True)
    parent.add_argument('-v', '--verbose', action='count', default=0)
    parent.add_argument('-q', '--quiet', dest='verbose', action='store_const', const=-1)
    return parent


def _data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--data', type=Path, help='preprocess output or raw flight directory / zip')
    parser.add_argument('--no-strict', dest='strict', action='store_const', const=False)
    parser.add_argument('--keep-severity', dest='keep_severities', type=int, nargs='+')


def _model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--event')
    parser.add_argument('--multi-output', action='store_true')
    parser.add_argument('--classes', nargs='+')
    parser.add_argument('--epochs', dest='model.epochs', type=int)
    parser.add_argument('--kernel-sizes', dest='model.kernel_sizes', type=int, nargs=3)
    parser.add_argument('--channels', dest='model.channels', type=int, nargs=3)
    parser.add_argument('--gru-hidden', dest='model.gru_hidden', type=int)
    parser.add_argument('--learning-rate', dest='model.learning_rate', type=float)
    parser.add_argument('--weight-decay', dest='model.weight_decay', type=float)
    parser.add_argument('--minibatch-fraction', dest='model.minibatch_fraction', type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='precursormil', description='Weakly supervised precursor mining.')
    sub = parser.add_subparsers(dest='command', required=True)
    common = _common()

    synth = sub.add_parser('synth', parents=[common], help='generate a synthetic corpus')
    synth.add_argument('--n-per-class', type=int, default=600)
    synth.add_argument('--num-features', type=int, default=12)
    synth.add_argument('--events', nargs='+', metavar='EVENT=FEATURE')
    synth.add_argument('--onset', type=float, default=5.0)
    synth.add_argument('--amplitude', type=float, default=4.0)
    synth.add_argument('--correlation', type=float, default=0.0)

    pre = sub.add_parser('preprocess', parents=[common], help='filter, resample and select features')
    _data_args(pre)
    pre.add_argument('--trivial', dest='trivial_features', nargs='+')
    pre.add_argument('--threshold', dest='correlation_threshold', type=float)

    tr = sub.add_parser('train', parents=[common], help='train one model')
    _data_args(tr)
    _model_args(tr)

    grid = sub.add_parser('gridsearch', parents=[common], help='train the hyperparameter grid')
    _data_args(grid)
    _model_args(grid)
    grid.add_argument('--reference', type=Path, help='flight_id,feature,score CSV for DFA')
    grid.add_argument('--jobs', type=int)
    grid.add_argument('--keep-checkpoints', action='store_true')

    for name, text in (('evaluate', 'score models on a split'), ('explain', 'precursor reports')):
        cmd = sub.add_parser(name, parents=[common], help=text)
        _data_args(cmd)
        cmd.add_argument('--model', dest='models', nargs='+', required=True, metavar='[EVENT=]PATH')
        cmd.add_argument('--split', dest='split_name', choices=('train', 'valid', 'test', 'all'), default='test')

    explain = sub.choices['explain']
    explain.add_argument('--flight', nargs='+')
    explain.add_argument('--plot', nargs='+', metavar='FEATURE', help='envelope charts for these features')
    explain.add_argument('--svg', action='store_true', help='temporal score charts')
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        key: value for key, value in vars(args).items()
        if key in _RUN_KEYS or key.startswith(('model.', 'split.'))
    }


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    handler = COMMANDS[args.command]
    try:
        config = create_run_config(args.config, _overrides(args))
        config.check_paths()
        artifacts = handler(config, args)
        extras = {'dfa_score_scale': DFA_SCORE_SCALE} if args.command in ('gridsearch', 'explain') else None
        write_manifest(
            config.out,  # type: ignore[arg-type]
            command=args.command,
            config=config.to_dict(),
            seed=config.seed,
            artifacts=artifacts,
            extras=extras,
        )
    except (ConfigInvalid, OSError) as exc:
        logger.error('%s', exc)
        return EXIT_CONFIG_ERROR
    except PrecursorMilError as exc:
        logger.error('%s: %s', type(exc).__name__, exc)
        return EXIT_MODULE_ERROR
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
