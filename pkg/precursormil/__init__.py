from precursormil._exceptions import (
    CheckpointError,
    ClassTooSmall,
    ConfigInvalid,
    EmptyFile,
    EmptyInput,
    EngineError,
    EvaluationError,
    FeatureOrderMismatch,
    FeatureSelectionError,
    FeatureSetMismatch,
    FlightDataError,
    InsufficientRange,
    LabelMismatch,
    MissingColumn,
    ModelError,
    NonFiniteLoss,
    NonMonotoneDistance,
    NonNumericCell,
    PrecursorError,
    PrecursorMilError,
    ShapeMismatch,
    SpecInvalid,
    SynthError,
    TooFewFlights,
    TrainingError,
    UndefinedMetric,
    UnknownClass,
    ZeroVariance,
)
from precursormil.config import RunConfig, create_run_config
from precursormil.dataset import FeatureScaler, FlightDataset, build_dataset
from precursormil.evaluation import (
    ConfusionMatrix,
    Metrics,
    ReferenceScores,
    classification_report,
    collapse,
    confusion,
    dfa,
    load_reference_scores,
    macro_f1,
    prf1,
)
from precursormil.features import (
    CorrelationMatrix,
    SelectionResult,
    apply_selection,
    compute_correlation,
    correlation_matrix,
    select_features,
)
from precursormil.flights import (
    DISTANCE_GRID,
    NOMINAL,
    EventLabel,
    FilterPolicy,
    FlightRecord,
    FlightSchema,
    ResampledFlight,
    filter_by_policy,
    load_flights,
    resample_all,
    resample_flight,
    write_resampled,
)
from precursormil.model import (
    CombinedPrediction,
    ForwardTrace,
    MHCNNRNN,
    ModelConfig,
    TrainedModel,
    build_binary,
    build_multi_output,
    combine_binary,
    combine_probabilities,
    forward_trace,
)
from precursormil.precursors import (
    FleetRanking,
    NominalEnvelope,
    PrecursorReport,
    adjusted_scores,
    build_report,
    extract,
    find_window,
    fleet_aggregate,
    nominal_envelope,
    rank_features,
    window_onset_distance,
)
from precursormil.synth import PlantedPrecursor, SynthSpec, create_spec, generate, write_corpus, write_planted
from precursormil.training import (
    GridSearchResult,
    SplitAssignment,
    SplitConfig,
    TrialResult,
    expand_grid,
    grid_search,
    minibatch_size,
    stratified_minibatches,
    stratified_split,
    train,
    trial_guard,
)

__version__ = '0.1.0'

__all__ = (
    'DISTANCE_GRID',
    'MHCNNRNN',
    'NOMINAL',
    'CheckpointError',
    'ClassTooSmall',
    'CombinedPrediction',
    'ConfigInvalid',
    'ConfusionMatrix',
    'CorrelationMatrix',
    'EmptyFile',
    'EmptyInput',
    'EngineError',
    'EvaluationError',
    'EventLabel',
    'FeatureOrderMismatch',
    'FeatureScaler',
    'FeatureSelectionError',
    'FeatureSetMismatch',
    'FilterPolicy',
    'FleetRanking',
    'FlightDataError',
    'FlightDataset',
    'FlightRecord',
    'FlightSchema',
    'ForwardTrace',
    'GridSearchResult',
    'InsufficientRange',
    'LabelMismatch',
    'Metrics',
    'MissingColumn',
    'ModelConfig',
    'ModelError',
    'NominalEnvelope',
    'NonFiniteLoss',
    'NonMonotoneDistance',
    'NonNumericCell',
    'PlantedPrecursor',
    'PrecursorError',
    'PrecursorMilError',
    'PrecursorReport',
    'ReferenceScores',
    'ResampledFlight',
    'RunConfig',
    'SelectionResult',
    'ShapeMismatch',
    'SpecInvalid',
    'SplitAssignment',
    'SplitConfig',
    'SynthError',
    'SynthSpec',
    'TooFewFlights',
    'TrainedModel',
    'TrainingError',
    'TrialResult',
    'UndefinedMetric',
    'UnknownClass',
    'ZeroVariance',
    '__version__',
    'adjusted_scores',
    'apply_selection',
    'build_binary',
    'build_dataset',
    'build_multi_output',
    'build_report',
    'classification_report',
    'collapse',
    'combine_binary',
    'combine_probabilities',
    'compute_correlation',
    'confusion',
    'correlation_matrix',
    'create_run_config',
    'create_spec',
    'dfa',
    'expand_grid',
    'extract',
    'filter_by_policy',
    'find_window',
    'fleet_aggregate',
    'forward_trace',
    'generate',
    'grid_search',
    'load_flights',
    'load_reference_scores',
    'macro_f1',
    'minibatch_size',
    'nominal_envelope',
    'prf1',
    'rank_features',
    'resample_all',
    'resample_flight',
    'select_features',
    'stratified_minibatches',
    'stratified_split',
    'train',
    'trial_guard',
    'window_onset_distance',
    'write_corpus',
    'write_planted',
    'write_resampled',
)
