# -*- encoding: utf-8 -*-
# ruff: noqa: F401
"""Condlab: token conditioning experiments for vision transformers."""

from importlib import metadata

from .config import CondlabConfig, get_settings
from .library import DuckDBRunLibrary, SqlAlchemyRunLibrary
from .main import Condlab
from .schema import (
    AblationReport,
    BlockConfig,
    BoundTrialStats,
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
    ConditionReport,
    DatasetHandle,
    ExperimentConfig,
    GrayingConfig,
    GrayingMethod,
    ModelParams,
    RngStream,
    RunReport,
    SweepReport,
)

try:
    meta = metadata.metadata(__package__ or __name__)
    __version__ = meta["Version"]
    __author__ = meta["Author"]
    __description__ = meta["Summary"]
except metadata.PackageNotFoundError:
    __version__ = "0.0.0"
