# -*- encoding: utf-8 -*-
# ruff: noqa: F401
"""Definition of all condlab value types, reports and errors."""

from .core import (
    Activation,
    AttentionKind,
    AttentionParams,
    BatchNormParams,
    BlockConfig,
    BoundTrial,
    BoundTrialStats,
    ConditionReport,
    ConvMixerModelParams,
    ConvMixerParams,
    DctBasis,
    EmbeddingTap,
    FfnParams,
    GrayingConfig,
    GrayingMethod,
    LayerConditionRecord,
    LayerParams,
    ModelParams,
    NormParams,
    Padding,
    RngStream,
    SvdFactors,
)
from .exception import (
    CondlabAutodiffError,
    CondlabBudgetError,
    CondlabConfigError,
    CondlabDatasetError,
    CondlabError,
    CondlabGrayingError,
    CondlabLibraryError,
    CondlabModelError,
    CondlabNonFiniteError,
    CondlabRankDeficientError,
    CondlabRunNotFoundError,
    CondlabShapeError,
    CondlabStorageError,
)
from .experiment import (
    AblationReport,
    Architecture,
    DatasetHandle,
    DatasetSource,
    DatasetSpec,
    EpochRecord,
    ExperimentConfig,
    ModelSpec,
    OptimizerKind,
    OptimizerSpec,
    RunArtifact,
    RunMetric,
    RunRecord,
    RunReport,
    SweepReport,
)
