'''
Multi-head convolutional + recurrent classifier under the multiple
instance assumption.

Each feature has its own head of four same-padded convolutions; the
fourth reduces to one channel and its sigmoid output is the raw precursor
score of that feature at every grid point. The concatenated scores feed a
GRU, tanh, a time distributed dense layer and a sigmoid, giving the
temporal score; the flight (bag) probability is its maximum over time.
'''
from __future__ import annotations

import dataclasses as dc
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np

from precursormil._exceptions import CheckpointError, ConfigInvalid, FeatureOrderMismatch, ShapeMismatch
from precursormil._model import DataclassMixin
from precursormil._types import Channels, EpochRecord, FloatArray, KernelSizes, ModelKind
from precursormil.dataset import FeatureScaler
from precursormil.engine import (
    GRU,
    BatchNorm1D,
    Conv1D,
    Dense,
    Module,
    Tensor,
    dump_checkpoint,
    max_over_time,
    no_grad,
    read_checkpoint,
    relu,
    sigmoid,
    tanh,
)
from precursormil.flights import NOMINAL

logger = logging.getLogger(__name__)

SEARCH_KERNEL_SIZES: tuple[KernelSizes, ...] = ((8, 5, 3), (6, 3, 2))
SEARCH_CHANNELS: tuple[Channels, ...] = ((10, 15, 20), (16, 32, 64), (32, 64, 128))
SEARCH_LEARNING_RATES: tuple[float, ...] = (1e-3, 1e-4)
SEARCH_WEIGHT_DECAYS: tuple[float, ...] = (1e-2, 1e-3, 1e-4)

# the channel reducing fourth convolution is pointwise
SCORE_KERNEL_SIZE = 1


@dc.dataclass(frozen=True)
class ModelConfig(DataclassMixin):
    kernel_sizes: KernelSizes = (8, 5, 3)
    channels: Channels = (16, 32, 64)
    gru_hidden: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    epochs: int = 30
    minibatch_fraction: float = 0.01
    decision_threshold: float = 0.5
    num_classes: int = 1
    seed: int = 0
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self) -> None:
        object.__setattr__(self, 'kernel_sizes', tuple(int(k) for k in self.kernel_sizes))
        object.__setattr__(self, 'channels', tuple(int(c) for c in self.channels))
        self.validate()

    def validate(self) -> None:
        if len(self.kernel_sizes) != 3 or min(self.kernel_sizes) < 1:
            raise ConfigInvalid('kernel_sizes', f'{self.kernel_sizes} must be three positive ints')
        if len(self.channels) != 3 or min(self.channels) < 1:
            raise ConfigInvalid('channels', f'{self.channels} must be three positive ints')
        if self.gru_hidden < 1:
            raise ConfigInvalid('gru_hidden', f'{self.gru_hidden} must be positive')
        if not self.learning_rate > 0:
            raise ConfigInvalid('learning_rate', f'{self.learning_rate} must be > 0')
        if self.weight_decay < 0:
            raise ConfigInvalid('weight_decay', f'{self.weight_decay} must be >= 0')
        if self.epochs < 1:
            raise ConfigInvalid('epochs', f'{self.epochs} must be >= 1')
        if not 0.0 < self.minibatch_fraction <= 1.0:
            raise ConfigInvalid('minibatch_fraction', f'{self.minibatch_fraction} is outside (0, 1]')
        if not 0.0 < self.decision_threshold < 1.0:
            raise ConfigInvalid('decision_threshold', f'{self.decision_threshold} is outside (0, 1)')
        if self.num_classes < 1:
            raise ConfigInvalid('num_classes', f'{self.num_classes} must be >= 1')
        if not 0.0 < self.bn_momentum <= 1.0 or not self.bn_eps > 0:
            raise ConfigInvalid('bn_momentum', 'momentum must be in (0, 1] and eps > 0')

    @property
    def on_default_grid(self) -> bool:
        return (
            self.kernel_sizes in SEARCH_KERNEL_SIZES
            and self.channels in SEARCH_CHANNELS
            and self.learning_rate in SEARCH_LEARNING_RATES
            and self.weight_decay in SEARCH_WEIGHT_DECAYS
        )


@dc.dataclass(frozen=True)
class ForwardTrace(DataclassMixin):
    '''
    Scores surfaced by one forward pass.

    raw_scores is (N, L, D), temporal_scores (N, L) for a binary model and
    (N, L, c) for multiple outputs, bag_prob (N,) or (N, c).
    '''

    raw_scores: FloatArray
    temporal_scores: FloatArray
    bag_prob: FloatArray
    threshold: float = 0.5

    @property
    def positive(self) -> np.ndarray:
        return self.bag_prob >= self.threshold


@dc.dataclass(slots=True)
class NetworkOutput:
    raw: Tensor
    temporal: Tensor
    bag: Tensor


class MHCNNRNN(Module):
    '''
    The network; heads run as one grouped convolution stack with per-head
    weights, so head i only ever sees feature i.
    '''

    def __init__(
        self,
        config: ModelConfig,
        num_features: int,
        length: int,
        num_outputs: int = 1,
    ) -> None:
        super().__init__()
        if num_features < 1:
            raise ConfigInvalid('num_features', f'{num_features} must be >= 1')
        if length < max(config.kernel_sizes):
            raise ConfigInvalid('length', f'{length} is shorter than the largest kernel')
        if num_outputs < 1:
            raise ConfigInvalid('num_outputs', f'{num_outputs} must be >= 1')

        self.num_features = num_features
        self.length = length
        self.num_outputs = num_outputs

        rng = np.random.default_rng(config.seed)
        k1, k2, k3 = config.kernel_sizes
        c1, c2, c3 = config.channels
        bn = {'heads': num_features, 'momentum': config.bn_momentum, 'eps': config.bn_eps}

        self.conv1 = Conv1D(1, c1, k1, heads=num_features, rng=rng)
        self.bn1 = BatchNorm1D(c1, **bn)
        self.conv2 = Conv1D(c1, c2, k2, heads=num_features, rng=rng)
        self.bn2 = BatchNorm1D(c2, **bn)
        self.conv3 = Conv1D(c2, c3, k3, heads=num_features, rng=rng)
        self.bn3 = BatchNorm1D(c3, **bn)
        self.conv4 = Conv1D(c3, 1, SCORE_KERNEL_SIZE, heads=num_features, rng=rng)
        self.gru = GRU(num_features, config.gru_hidden, rng=rng)
        self.dense = Dense(config.gru_hidden, num_outputs, rng=rng)

    def forward(self, x: Tensor) -> NetworkOutput:
        if x.ndim != 3 or x.shape[1:] != (self.length, self.num_features):
            raise ShapeMismatch('batch', ('N', self.length, self.num_features), x.shape)
        n = x.shape[0]

        h = x.transpose(0, 2, 1).reshape(n, self.num_features, 1, self.length)
        h = relu(self.bn1(self.conv1(h)))
        h = relu(self.bn2(self.conv2(h)))
        h = relu(self.bn3(self.conv3(h)))
        raw = sigmoid(self.conv4(h))
        raw = raw.reshape(n, self.num_features, self.length).transpose(0, 2, 1)

        temporal = sigmoid(self.dense(tanh(self.gru(raw))))
        if self.num_outputs == 1:
            temporal = temporal.reshape(n, self.length)
        bag, _ = max_over_time(temporal)
        return NetworkOutput(raw=raw, temporal=temporal, bag=bag)


@dc.dataclass
class TrainedModel:
    '''
    A network with everything needed to run it on raw flight tensors.

    For a binary model `classes` holds the single event it detects; for a
    multiple output model it lists the c output classes in node order.
    '''

    network: MHCNNRNN
    config: ModelConfig
    kind: ModelKind
    classes: tuple[str, ...]
    feature_names: tuple[str, ...]
    scaler: FeatureScaler
    history: list[EpochRecord] = dc.field(default_factory=list)

    @property
    def event(self) -> str:
        if self.kind != 'binary':
            raise ConfigInvalid('kind', 'only binary models have a single event')
        return self.classes[0]

    @property
    def length(self) -> int:
        return self.network.length

    @property
    def threshold(self) -> float:
        return self.config.decision_threshold

    def prepare(self, values: FloatArray) -> Tensor:
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[1:] != (self.length, len(self.feature_names)):
            raise ShapeMismatch('batch', ('N', self.length, len(self.feature_names)), values.shape)
        if not np.isfinite(values).all():
            raise ConfigInvalid('batch', 'input contains non-finite values')
        return Tensor(self.scaler.transform(values))

    def trace(self, values: FloatArray) -> ForwardTrace:
        return forward_trace(self, values)

    def predict_proba(self, values: FloatArray) -> FloatArray:
        return self.trace(values).bag_prob

    def predict(self, values: FloatArray) -> np.ndarray:
        '''
        Binary: boolean flags (bag_prob >= threshold). Multiple outputs:
        the class with the highest probability, first class on ties.
        '''
        trace = self.trace(values)
        if self.kind == 'binary':
            return trace.positive
        return np.asarray(self.classes, dtype=object)[np.argmax(trace.bag_prob, axis=1)]

    def save(self, path: str | Path) -> Path:
        meta: dict[str, Any] = {
            'kind': self.kind,
            'config': self.config.to_dict(),
            'classes': list(self.classes),
            'feature_names': list(self.feature_names),
            'length': self.length,
            'history': [dict(record) for record in self.history],
        }
        arrays = {f'network.{name}': value for name, value in self.network.state_dict().items()}
        arrays['scaler.mean'] = self.scaler.mean
        arrays['scaler.scale'] = self.scaler.scale
        return dump_checkpoint(path, meta, arrays)

    @classmethod
    def load(cls, path: str | Path) -> TrainedModel:
        meta, arrays = read_checkpoint(path)
        try:
            config = ModelConfig.from_dict(meta['config'])
            kind = meta['kind']
            classes = tuple(meta['classes'])
            feature_names = tuple(meta['feature_names'])
            network = MHCNNRNN(
                config,
                len(feature_names),
                int(meta['length']),
                num_outputs=1 if kind == 'binary' else len(classes),
            )
            network.load_state_dict({
                name.removeprefix('network.'): value
                for name, value in arrays.items()
                if name.startswith('network.')
            })
            scaler = FeatureScaler(mean=arrays['scaler.mean'], scale=arrays['scaler.scale'])
        except KeyError as exc:
            raise CheckpointError(f'Checkpoint `{path}` is missing `{exc.args[0]}`.') from exc
        network.eval()
        return cls(
            network=network,
            config=config,
            kind=kind,
            classes=classes,
            feature_names=feature_names,
            scaler=scaler,
            history=[EpochRecord(**record) for record in meta.get('history', [])],
        )


def build_binary(
    config: ModelConfig,
    num_features: int,
    length: int,
    *,
    event: str = 'Event',
    feature_names: tuple[str, ...] | None = None,
) -> TrainedModel:
    '''
    Untrained binary MHCNN-RNN with `num_features` heads.
    '''
    names = feature_names or tuple(f'f{i}' for i in range(num_features))
    if len(names) != num_features:
        raise ConfigInvalid('feature_names', f'{len(names)} names for {num_features} features')
    network = MHCNNRNN(config.copy_with(num_classes=1), num_features, length, num_outputs=1)
    return TrainedModel(
        network=network,
        config=config.copy_with(num_classes=1),
        kind='binary',
        classes=(event,),
        feature_names=names,
        scaler=FeatureScaler.identity(num_features),
    )


def build_multi_output(
    config: ModelConfig,
    num_features: int,
    length: int,
    num_classes: int,
    *,
    classes: tuple[str, ...] | None = None,
    feature_names: tuple[str, ...] | None = None,
) -> TrainedModel:
    '''
    Untrained MHCNN-RNN with one sigmoid output node per class.

    Class probabilities are independent sigmoids max pooled per class;
    they are not normalized to sum to one.
    '''
    if num_classes < 2:
        raise ConfigInvalid('num_classes', f'{num_classes} must be >= 2 for multiple outputs')
    classes = classes or (NOMINAL, *(f'Event{i}' for i in range(1, num_classes)))
    if len(classes) != num_classes:
        raise ConfigInvalid('classes', f'{len(classes)} names for {num_classes} classes')
    names = feature_names or tuple(f'f{i}' for i in range(num_features))
    if len(names) != num_features:
        raise ConfigInvalid('feature_names', f'{len(names)} names for {num_features} features')
    network = MHCNNRNN(config, num_features, length, num_outputs=num_classes)
    return TrainedModel(
        network=network,
        config=config.copy_with(num_classes=num_classes),
        kind='multi_output',
        classes=tuple(classes),
        feature_names=names,
        scaler=FeatureScaler.identity(num_features),
    )


def forward_trace(model: TrainedModel, values: FloatArray) -> ForwardTrace:
    '''
    Run the model in inference mode on raw (N, L, D) values.
    '''
    batch = model.prepare(values)
    was_training = model.network.training
    model.network.eval()
    try:
        with no_grad():
            out = model.network(batch)
    finally:
        model.network.train(was_training)
    return ForwardTrace(
        raw_scores=out.raw.data,
        temporal_scores=out.temporal.data,
        bag_prob=out.bag.data,
        threshold=model.threshold,
    )


# -- multiple binary classifiers ---------------------------------------------


@dc.dataclass(frozen=True)
class CombinedPrediction(DataclassMixin):
    events: tuple[str, ...]
    probabilities: FloatArray  # (N, len(events)), columns in `events` order
    predictions: tuple[str, ...]


def combine_probabilities(
    probabilities: Mapping[str, FloatArray],
    threshold: float = 0.5,
) -> CombinedPrediction:
    '''
    Pick per flight the event with the highest probability >= threshold.

    Flights with no event at or above the threshold are Nominal; equal
    maxima resolve to the event whose name sorts first.
    '''
    events = tuple(sorted(probabilities))
    if not events:
        raise ConfigInvalid('models', 'at least one event model is required')
    table = np.column_stack([np.asarray(probabilities[e], dtype=np.float64).reshape(-1) for e in events])
    masked = np.where(table >= threshold, table, -np.inf)
    best = np.argmax(masked, axis=1)
    above = np.isfinite(masked[np.arange(table.shape[0]), best])
    predictions = tuple(events[b] if ok else NOMINAL for b, ok in zip(best, above, strict=True))
    return CombinedPrediction(events=events, probabilities=table, predictions=predictions)


def combine_binary(
    models: Mapping[str, TrainedModel],
    values: FloatArray,
    threshold: float = 0.5,
) -> CombinedPrediction:
    '''
    One-vs-nominal combination of binary event models.

    Raises
    ------
    FeatureOrderMismatch
        If the models disagree on feature order or sequence length.
    '''
    reference: TrainedModel | None = None
    for event, model in sorted(models.items()):
        if model.kind != 'binary':
            raise ConfigInvalid('models', f'model for `{event}` is not binary')
        if reference is None:
            reference = model
        elif model.feature_names != reference.feature_names or model.length != reference.length:
            raise FeatureOrderMismatch(event)

    probabilities = {event: model.predict_proba(values) for event, model in models.items()}
    return combine_probabilities(probabilities, threshold)
