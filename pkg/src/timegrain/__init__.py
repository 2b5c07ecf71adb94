"""Temporal-clustering transformations for irregular multivariate sequences.

The library turns a timestamped event sequence into shorter views of
itself, either stochastically (training-time augmentation) or
deterministically (grid- and cluster-based coarsening), encodes events as
fixed-width feature vectors, and combines one shared predictor across
several coarsening resolutions with attention.
"""

from .augment import (
    AugmentConfig,
    IntervalWeights,
    NoIntervalsError,
    SamplingExhaustedError,
    fast_augment,
    interval_weights,
    merge_sampled_intervals,
    sample_intervals,
)
from .coarsen import (
    Clustering,
    CoarseningSpec,
    GridUnusableError,
    cluster_and_count,
    coarsen,
    grid_and_count,
    kmeans1d_exact,
)
from .codec import (
    FeatureCodec,
    OrdinalSpec,
    RobustStats,
    UnfitVariableError,
    VariableSpec,
    encode_count,
    encode_time_gap,
    featurize,
    fit_codec,
    fit_robust_stats,
    load_codec,
    save_codec,
    transform_real,
    unary_encode,
)
from .core import Event, EventSequence, LabeledSequence, merge_events, validate
from .evaluate import (
    EvalReport,
    MetricSummary,
    UndefinedMetricError,
    average_precision,
    bootstrap,
    classification_metrics,
    fgsm,
    invariance_gap,
    regression_metrics,
    roc_auc,
)
from .model import (
    MreModel,
    MreSettings,
    Predictor,
    ReferencePredictor,
    TrainConfig,
    TrainingDivergedError,
    TrainResult,
    attention_weights,
    input_gradient,
    load_model,
    mre_predict,
    pooled_matrix,
    save_model,
    train,
)
from .records import RecordError, read_records, write_records
from .synth import OracleRule, SynthConfig, SynthDataset, generate

__version__ = "0.1.0"
