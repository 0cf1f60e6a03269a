'''
Stratified splits, stratified mini-batches, the ADAM training loop and
the hyperparameter grid search.
'''
from __future__ import annotations

import dataclasses as dc
import functools
import itertools
import logging
import math
import tempfile
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from tqdm import tqdm

from precursormil._exceptions import (
    ClassTooSmall,
    ConfigInvalid,
    EngineError,
    ModelError,
    TrainingError,
)
from precursormil._io import write_csv
from precursormil._model import DataclassMixin
from precursormil._types import EpochRecord, FloatArray, GridAxes, IntArray, ModelKind, SplitCounts, SplitTag, TrialStatus
from precursormil.dataset import FeatureScaler, FlightDataset
from precursormil.engine import Adam, Tensor, backward, binary_cross_entropy
from precursormil.evaluation import (
    ConfusionMatrix,
    Metrics,
    ReferenceScores,
    align_scores,
    confusion,
    dfa,
    macro_f1,
    prf1,
)
from precursormil.flights import NOMINAL
from precursormil.model import (
    SEARCH_CHANNELS,
    SEARCH_KERNEL_SIZES,
    SEARCH_LEARNING_RATES,
    SEARCH_WEIGHT_DECAYS,
    ModelConfig,
    TrainedModel,
    build_binary,
    build_multi_output,
)
from precursormil.precursors import true_positive_reports

logger = logging.getLogger(__name__)

MIN_CLASS_SIZE = 3
_SIZE_GUARD = 1e-9


# -- splitting ---------------------------------------------------------------


@dc.dataclass(frozen=True)
class SplitConfig(DataclassMixin):
    train: float = 0.70
    valid: float = 0.15
    test: float = 0.15
    seed: int = 0

    def __post_init__(self) -> None:
        for key in ('train', 'valid', 'test'):
            value = getattr(self, key)
            if not 0.0 < value < 1.0:
                raise ConfigInvalid(key, f'split fraction {value} is outside (0, 1)')
        if abs(self.train + self.valid + self.test - 1.0) > 1e-9:
            raise ConfigInvalid('train', 'split fractions must sum to 1')


@dc.dataclass(frozen=True)
class SplitAssignment(DataclassMixin):
    tags: tuple[SplitTag, ...]
    fractions: SplitConfig

    @property
    def seed(self) -> int:
        return self.fractions.seed

    def indices(self, tag: SplitTag) -> IntArray:
        return np.array([i for i, t in enumerate(self.tags) if t == tag], dtype=np.int64)

    @property
    def counts(self) -> SplitCounts:
        return SplitCounts(
            train=self.tags.count('train'),
            valid=self.tags.count('valid'),
            test=self.tags.count('test'),
        )


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5 + _SIZE_GUARD))


def _class_counts(n: int, fractions: SplitConfig) -> tuple[int, int, int]:
    n_train = max(1, _round_half_up(n * fractions.train))
    n_valid = max(1, _round_half_up(n * fractions.valid))
    while n_train + n_valid > n - 1:
        if n_train >= n_valid and n_train > 1:
            n_train -= 1
        else:
            n_valid -= 1
    return n_train, n_valid, n - n_train - n_valid


def stratified_split(
    data: FlightDataset | Sequence[str],
    fractions: SplitConfig | None = None,
    seed: int | None = None,
) -> SplitAssignment:
    '''
    Assign every flight to train, valid or test, class by class.

    Each class is shuffled with the split seed and cut with round half up
    counts, so per-class proportions track the global ones within one
    flight and every split receives at least one flight of every class.

    Raises
    ------
    ClassTooSmall
        If a class has fewer than three flights.
    '''
    fractions = fractions or SplitConfig()
    if seed is not None:
        fractions = fractions.copy_with(seed=seed)
    labels = tuple(data.labels if isinstance(data, FlightDataset) else data)

    rng = np.random.default_rng(fractions.seed)
    tags: list[SplitTag] = ['train'] * len(labels)
    for label in sorted(set(labels)):
        members = np.array([i for i, name in enumerate(labels) if name == label])
        if members.size < MIN_CLASS_SIZE:
            raise ClassTooSmall(label, int(members.size), MIN_CLASS_SIZE)
        members = rng.permutation(members)
        n_train, n_valid, _ = _class_counts(members.size, fractions)
        for i in members[n_train:n_train + n_valid]:
            tags[i] = 'valid'
        for i in members[n_train + n_valid:]:
            tags[i] = 'test'

    assignment = SplitAssignment(tags=tuple(tags), fractions=fractions)
    logger.info('Split %d flights into %s', len(labels), dict(assignment.counts))
    return assignment


def split_dataset(dataset: FlightDataset, assignment: SplitAssignment) -> tuple[FlightDataset, FlightDataset, FlightDataset]:
    if len(assignment.tags) != len(dataset):
        raise TrainingError(f'Assignment covers {len(assignment.tags)} flights, dataset has {len(dataset)}.')
    return (
        dataset.subset(assignment.indices('train')),
        dataset.subset(assignment.indices('valid')),
        dataset.subset(assignment.indices('test')),
    )


# -- mini-batching -----------------------------------------------------------


def minibatch_size(num_flights: int, fraction: float) -> int:
    '''`ceil(fraction * num_flights)`, at least one.'''
    return max(1, math.ceil(num_flights * fraction - _SIZE_GUARD))


def stratified_minibatches(
    labels: Sequence[str],
    batch_size: int,
    rng: np.random.Generator,
) -> list[IntArray]:
    '''
    Partition flights into `ceil(N / batch_size)` class-stratified batches.

    Every class is shuffled and dealt evenly over the batches. A class
    with fewer flights than batches is cycled, so each batch still holds
    one of its flights; no flight is ever dropped.
    '''
    n = len(labels)
    if n == 0:
        return []
    if batch_size < 1:
        raise ConfigInvalid('batch_size', f'{batch_size} must be >= 1')
    num_batches = math.ceil(n / batch_size)

    parts: list[list[IntArray]] = [[] for _ in range(num_batches)]
    for label in sorted(set(labels)):
        members = rng.permutation([i for i, name in enumerate(labels) if name == label])
        if members.size >= num_batches:
            chunks = np.array_split(members, num_batches)
        else:
            chunks = [members[[b % members.size]] for b in range(num_batches)]
        for b, chunk in enumerate(chunks):
            parts[b].append(chunk)
    return [rng.permutation(np.concatenate(part)).astype(np.int64) for part in parts]


# -- training ----------------------------------------------------------------


def _targets(model: TrainedModel, dataset: FlightDataset) -> FloatArray:
    if model.kind == 'binary':
        return dataset.binary_targets(model.event)
    return dataset.one_hot(model.classes)


def _check_trainable(model: TrainedModel, dataset: FlightDataset) -> None:
    if dataset.feature_names != model.feature_names:
        raise TrainingError('Training data feature order differs from the model feature order.')
    present = set(dataset.labels)
    required = model.classes if model.kind == 'multi_output' else (model.event,)
    missing = [name for name in required if name not in present]
    if missing:
        raise TrainingError(f'Training split has no flights of {missing}.')


def evaluate_model(model: TrainedModel, dataset: FlightDataset) -> ConfusionMatrix:
    '''
    Confusion matrix of `model` on `dataset`.

    A binary model is scored event versus Nominal; flights of any other
    label count as Nominal.
    '''
    if model.kind == 'binary':
        event = model.event
        flags = model.predict(dataset.values)
        actual = [event if label == event else NOMINAL for label in dataset.labels]
        predicted = [event if flag else NOMINAL for flag in flags]
        return confusion(actual, predicted, (NOMINAL, event))
    return confusion(dataset.labels, list(model.predict(dataset.values)), model.classes)


def summarize(model: TrainedModel, cm: ConfusionMatrix) -> Metrics:
    '''Event metrics for a binary model, macro averages for multiple outputs.'''
    if model.kind == 'binary':
        return prf1(cm, model.event)
    per_class = [prf1(cm, name) for name in cm.classes]

    def mean(values: list[float | None]) -> float | None:
        defined = [v for v in values if v is not None]
        return float(np.mean(defined)) if defined else None

    return Metrics(
        precision=mean([m.precision for m in per_class]),
        recall=mean([m.recall for m in per_class]),
        f1=macro_f1(cm),
    )


def train(
    model: TrainedModel,
    train_set: FlightDataset,
    valid_set: FlightDataset | None = None,
    config: ModelConfig | None = None,
    *,
    progress: bool = False,
) -> TrainedModel:
    '''
    Fit `model` in place with ADAM on the bag level cross-entropy.

    Parameters
    ----------
    model : TrainedModel
        Built with `build_binary` or `build_multi_output`.
    train_set : FlightDataset
        Training flights; the input scaler is fitted on them.
    valid_set : FlightDataset, optional
        Scored after every epoch; `valid_f1` is None without it.
    config : ModelConfig, optional
        Optimization settings; defaults to the model's own config.
    progress : bool, optional
        Show a tqdm bar over epochs.

    Returns
    -------
    TrainedModel
        The same object, in eval mode, with `history` filled in.

    Raises
    ------
    NonFiniteLoss
        If a mini-batch loss becomes NaN or infinite.
    '''
    config = config or model.config
    _check_trainable(model, train_set)

    model.scaler = FeatureScaler.fit(train_set.values)
    inputs = model.scaler.transform(train_set.values)
    targets = _targets(model, train_set)
    rng = np.random.default_rng([config.seed, 1])

    network = model.network
    optimizer = Adam(
        network.named_parameters(),
        learning_rate=config.learning_rate,
        weight_decay=config.weight_decay,
    )
    params = list(optimizer.params.values())
    batch_size = minibatch_size(len(train_set), config.minibatch_fraction)
    logger.info(
        'Training %s model on %d flights, batch size %d, %d epochs',
        model.kind, len(train_set), batch_size, config.epochs,
    )

    model.history = []
    epochs = tqdm(range(1, config.epochs + 1), desc='epochs', disable=not progress, leave=False)
    for epoch in epochs:
        network.train()
        total = 0.0
        seen = 0
        for b, index in enumerate(stratified_minibatches(train_set.labels, batch_size, rng)):
            optimizer.zero_grad()
            out = network(Tensor(inputs[index]))
            loss = binary_cross_entropy(out.bag, targets[index])
            backward(loss, params)
            optimizer.step()
            total += loss.item() * index.size
            seen += index.size
            logger.debug('epoch %d batch %d loss %.6f', epoch, b, loss.item())

        network.eval()
        valid_f1 = None
        if valid_set is not None and len(valid_set):
            valid_f1 = summarize(model, evaluate_model(model, valid_set)).f1
        record = EpochRecord(epoch=epoch, train_loss=total / seen, valid_f1=valid_f1)
        model.history.append(record)
        logger.info('epoch %d train_loss %.6f valid_f1 %s', epoch, record['train_loss'], valid_f1)

    network.eval()
    return model


# -- grid search -------------------------------------------------------------


@dc.dataclass(frozen=True)
class TrialSpec(DataclassMixin):
    trial_index: int
    config: ModelConfig
    kind: ModelKind
    classes: tuple[str, ...]
    train_set: FlightDataset
    valid_set: FlightDataset
    reference: ReferenceScores | None = None
    checkpoint_dir: Path | None = None


@dc.dataclass(frozen=True)
class TrialResult(DataclassMixin):
    trial_index: int
    config: ModelConfig
    status: TrialStatus = 'ok'
    reason: str | None = None
    f1: float | None = None
    precision: float | None = None
    recall: float | None = None
    dfa: float | None = None
    wall_time: float = 0.0
    checkpoint: Path | None = None

    @property
    def ok(self) -> bool:
        return self.status == 'ok'

    def sort_key(self) -> tuple[Any, ...]:
        '''Failed last, F1 descending, DFA ascending, then grid order.'''
        f1 = self.f1 if self.f1 is not None else -1.0
        distance = self.dfa if self.dfa is not None else math.inf
        return (not self.ok, -f1, distance, self.trial_index)

    def row(self) -> dict[str, Any]:
        return {
            'trial_index': self.trial_index,
            'kernel_sizes': '-'.join(map(str, self.config.kernel_sizes)),
            'channels': '-'.join(map(str, self.config.channels)),
            'learning_rate': self.config.learning_rate,
            'weight_decay': self.config.weight_decay,
            'seed': self.config.seed,
            'f1': self.f1,
            'precision': self.precision,
            'recall': self.recall,
            'dfa': self.dfa,
            'status': self.status,
            'reason': self.reason or '',
        }


def trial_guard(
    *,
    errors: tuple[type[Exception], ...] = (EngineError, ModelError, TrainingError),
) -> Callable[[Callable[[TrialSpec], TrialResult]], Callable[[TrialSpec], TrialResult]]:
    '''
    Turn `errors` raised by a trial into a failed `TrialResult`.

    The wrapped call is timed; a failed result keeps the trial's index
    and config and stores the error message in `reason`.
    '''

    def decorator(func: Callable[[TrialSpec], TrialResult]) -> Callable[[TrialSpec], TrialResult]:
        @functools.wraps(func)
        def wrapper(spec: TrialSpec) -> TrialResult:
            start = time.perf_counter()
            try:
                result = func(spec)
            except errors as exc:
                logger.warning('Trial %d failed: %s', spec.trial_index, exc)
                return TrialResult(
                    trial_index=spec.trial_index,
                    config=spec.config,
                    status='failed',
                    reason=f'{type(exc).__name__}: {exc}',
                    wall_time=time.perf_counter() - start,
                )
            return result.copy_with(wall_time=time.perf_counter() - start)

        return wrapper

    return decorator


def build_model(config: ModelConfig, kind: ModelKind, classes: Sequence[str], dataset: FlightDataset) -> TrainedModel:
    if kind == 'binary':
        return build_binary(
            config, dataset.num_features, dataset.length,
            event=classes[0], feature_names=dataset.feature_names,
        )
    return build_multi_output(
        config, dataset.num_features, dataset.length, len(classes),
        classes=tuple(classes), feature_names=dataset.feature_names,
    )


def validation_dfa(model: TrainedModel, valid_set: FlightDataset, reference: ReferenceScores) -> float | None:
    '''
    DFA of the normalized adjusted scores of validation true positives
    against the reference flights they share.
    '''
    ours = {r.flight_id: r.normalized_scores() for r in true_positive_reports(model, valid_set)}
    left, right = align_scores(ours, reference.scores)
    left = {flight: table for flight, table in left.items() if table}
    if not left:
        return None
    return dfa(left, {flight: right[flight] for flight in left})


@trial_guard()
def run_trial(spec: TrialSpec) -> TrialResult:
    model = build_model(spec.config, spec.kind, spec.classes, spec.train_set)
    train(model, spec.train_set, spec.valid_set)
    metrics = summarize(model, evaluate_model(model, spec.valid_set))

    distance = None
    if spec.reference is not None and spec.kind == 'binary':
        distance = validation_dfa(model, spec.valid_set, spec.reference)

    checkpoint = None
    if spec.checkpoint_dir is not None:
        checkpoint = model.save(Path(spec.checkpoint_dir) / f'trial_{spec.trial_index:03d}.json')

    logger.info('Trial %d: f1=%s dfa=%s', spec.trial_index, metrics.f1, distance)
    return TrialResult(
        trial_index=spec.trial_index,
        config=spec.config,
        f1=metrics.f1,
        precision=metrics.precision,
        recall=metrics.recall,
        dfa=distance,
        checkpoint=checkpoint,
    )


def default_axes() -> GridAxes:
    return GridAxes(
        kernel_sizes=list(SEARCH_KERNEL_SIZES),
        channels=list(SEARCH_CHANNELS),
        learning_rate=list(SEARCH_LEARNING_RATES),
        weight_decay=list(SEARCH_WEIGHT_DECAYS),
    )


def expand_grid(axes: GridAxes | None = None, base: ModelConfig | None = None) -> list[ModelConfig]:
    '''
    One config per combination, in kernel, channel, learning rate, weight
    decay order. Missing axes take the default grid values; trial i is
    seeded with `base.seed + i`.
    '''
    base = base or ModelConfig()
    merged = default_axes() | (axes or {})
    for key in ('kernel_sizes', 'channels', 'learning_rate', 'weight_decay'):
        if not merged[key]:
            raise ConfigInvalid(key, 'grid axis is empty')
    combos = itertools.product(
        merged['kernel_sizes'], merged['channels'], merged['learning_rate'], merged['weight_decay'],
    )
    return [
        base.copy_with(
            kernel_sizes=tuple(k), channels=tuple(c),
            learning_rate=float(lr), weight_decay=float(wd), seed=base.seed + i,
        )
        for i, (k, c, lr, wd) in enumerate(combos)
    ]


@dc.dataclass
class GridSearchResult:
    trials: list[TrialResult]
    best_model: TrainedModel | None = None

    @property
    def best(self) -> TrialResult | None:
        return self.trials[0] if self.trials and self.trials[0].ok else None


def grid_search(
    train_set: FlightDataset,
    valid_set: FlightDataset,
    *,
    event: str | None = None,
    classes: Sequence[str] | None = None,
    axes: GridAxes | None = None,
    base_config: ModelConfig | None = None,
    reference: ReferenceScores | None = None,
    jobs: int = 1,
    checkpoint_dir: str | Path | None = None,
    progress: bool = False,
) -> GridSearchResult:
    '''
    Train one model per grid combination and rank them on validation.

    Give `event` for binary models (trained on Nominal plus that event)
    or `classes` for multiple output models. Only the train and valid
    splits are passed in; the test split plays no part in selection.

    Returns
    -------
    GridSearchResult
        Trials sorted best first (failed trials last) and the best model,
        loaded back from its checkpoint.
    '''
    if (event is None) == (classes is None):
        raise ConfigInvalid('event', 'give exactly one of `event` or `classes`')
    if jobs < 1:
        raise ConfigInvalid('jobs', f'{jobs} must be >= 1')
    kind: ModelKind = 'binary' if event is not None else 'multi_output'
    names = (event,) if event is not None else tuple(classes or ())
    if kind == 'binary':
        train_set = train_set.binary_view(event)
        valid_set = valid_set.binary_view(event)

    configs = expand_grid(axes, base_config)
    logger.info('Grid search over %d combinations with %d job(s)', len(configs), jobs)

    with tempfile.TemporaryDirectory(prefix='precursormil-') as scratch:
        target = Path(checkpoint_dir) if checkpoint_dir is not None else Path(scratch)
        target.mkdir(parents=True, exist_ok=True)
        specs = [
            TrialSpec(
                trial_index=i, config=config, kind=kind, classes=names,
                train_set=train_set, valid_set=valid_set,
                reference=reference, checkpoint_dir=target,
            )
            for i, config in enumerate(configs)
        ]
        if jobs == 1:
            results = [run_trial(spec) for spec in tqdm(specs, desc='trials', disable=not progress)]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(tqdm(pool.map(run_trial, specs), total=len(specs), desc='trials', disable=not progress))

        ranked = sorted(results, key=TrialResult.sort_key)
        best_model = None
        if ranked and ranked[0].ok and ranked[0].checkpoint is not None:
            best_model = TrainedModel.load(ranked[0].checkpoint)
        if checkpoint_dir is None:
            ranked = [r.copy_with(checkpoint=None) for r in ranked]

    failed = sum(not r.ok for r in ranked)
    if failed:
        logger.warning('%d of %d trials failed', failed, len(ranked))
    return GridSearchResult(trials=ranked, best_model=best_model)


def write_trials(trials: Sequence[TrialResult], path: str | Path) -> Path:
    '''One row per combination in ranking order; timings go to `write_timings`.'''
    frame = pd.DataFrame([t.row() for t in trials])
    return write_csv(frame.astype(object).where(frame.notna(), 'undefined'), path)


def write_timings(trials: Sequence[TrialResult], path: str | Path) -> Path:
    frame = pd.DataFrame(
        [{'trial_index': t.trial_index, 'wall_time': t.wall_time} for t in sorted(trials, key=lambda t: t.trial_index)]
    )
    return write_csv(frame, path)
