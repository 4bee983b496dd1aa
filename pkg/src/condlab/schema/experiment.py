# -*- encoding: utf-8 -*-
# ruff: noqa: A003
"""Experiment schema definitions.

Experiment configuration as read from JSON files, dataset handles, and the
reports emitted by training runs, ablations and sweeps. The read models of the
run library live here as well.
"""

from __future__ import annotations

import math
import uuid
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from condlab.schema.core import (
    Activation,
    AttentionKind,
    BlockConfig,
    ConditionReport,
    GrayingConfig,
    Padding,
)


class Architecture(str, Enum):
    """Model families supported by the training harness."""

    VIT = "vit"
    CONVMIXER = "convmixer"


class ModelSpec(BaseModel):
    """Hyperparameters of the model to build."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    architecture: Architecture = Architecture.VIT
    layers: int = Field(default=4, ge=0)
    dim: int = Field(default=64, ge=1)
    heads: int = Field(default=4, ge=1)
    patch_size: int = Field(default=4, ge=1)
    attention: AttentionKind = AttentionKind.SOFTMAX
    linear_scale: float = Field(default=16.0, gt=0.0)
    mlp_ratio: int = Field(default=4, ge=1)
    activation: Activation = Activation.GELU
    class_token: bool = True
    positional: bool = True
    init_std: float = Field(default=0.02, gt=0.0)
    kernel_size: int = Field(default=5, ge=1)
    padding: Padding = Padding.ZEROS

    @model_validator(mode="after")
    def _check_heads(self) -> ModelSpec:
        if self.architecture == Architecture.VIT and self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} is not divisible by {self.heads} heads")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")
        return self


class OptimizerKind(str, Enum):
    """Parameter update rules."""

    ADAMW = "adamw"
    SGD = "sgd"


class OptimizerSpec(BaseModel):
    """Optimizer hyperparameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: OptimizerKind = OptimizerKind.ADAMW
    learning_rate: float = Field(default=1e-3, gt=0.0)
    weight_decay: float = Field(default=0.05, ge=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class DatasetSource(str, Enum):
    """Where the images of a dataset come from."""

    SYNTHETIC = "synthetic"
    CIFAR10 = "cifar10"


class DatasetSpec(BaseModel):
    """Dataset selection and generation parameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    source: DatasetSource = DatasetSource.SYNTHETIC
    path: Optional[str] = None
    classes: int = Field(default=10, ge=2)
    per_class: int = Field(default=100, ge=1)
    image_size: int = Field(default=32, ge=1)
    channels: int = Field(default=3, ge=1)
    noise: float = Field(default=0.5, ge=0.0)
    val_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    limit: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_path(self) -> DatasetSpec:
        if self.source == DatasetSource.CIFAR10:
            if self.path is None:
                raise ValueError("the cifar10 dataset source requires a path")
            if not Path(self.path).exists():
                raise ValueError(f"dataset path {self.path} does not exist")
        return self


class ExperimentConfig(BaseModel):
    """Complete description of a training experiment."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = "experiment"
    seed: int = Field(ge=0, lt=2**64)
    model: ModelSpec = Field(default_factory=ModelSpec)
    block: BlockConfig = Field(default_factory=BlockConfig)
    graying: GrayingConfig = Field(default_factory=GrayingConfig)
    optimizer: OptimizerSpec = Field(default_factory=OptimizerSpec)
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    epochs: int = Field(default=10, ge=0)
    batch_size: int = Field(default=64, ge=1)
    output_dir: Optional[str] = None
    profile_samples: int = Field(default=16, ge=1)
    trace_condition: bool = True
    save_checkpoint: bool = True


class DatasetHandle(BaseModel):
    """Images and labels of a train/validation split.

    Images have shape (N, H, W, C), labels are integers in [0, classes).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    source: DatasetSource
    image_shape: Tuple[int, int, int]
    classes: int = Field(ge=2)
    train_images: np.ndarray
    train_labels: np.ndarray
    val_images: np.ndarray
    val_labels: np.ndarray
    normalization: Dict[str, List[float]] = Field(default_factory=dict)
    class_means: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _check_labels(self) -> DatasetHandle:
        for split, images, labels in (
            ("train", self.train_images, self.train_labels),
            ("val", self.val_images, self.val_labels),
        ):
            if images.shape[1:] != tuple(self.image_shape):
                raise ValueError(f"{split} images do not have shape {self.image_shape}")
            if images.shape[0] != labels.shape[0]:
                raise ValueError(f"{split} images and labels differ in length")
            if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
                raise ValueError(f"{split} labels outside [0, {self.classes})")
        return self

    @property
    def split_sizes(self) -> Dict[str, int]:
        """Number of samples per split."""
        return {"train": int(self.train_labels.size), "val": int(self.val_labels.size)}


class EpochRecord(BaseModel):
    """Metrics after one epoch. Epoch 0 holds the metrics at initialization."""

    model_config = ConfigDict(frozen=True)

    epoch: int = Field(ge=0)
    train_loss: Optional[float] = None
    val_loss: Optional[float] = None
    val_accuracy: float = Field(ge=0.0, le=1.0)
    sab_log_condition: Optional[float] = None
    diverged: bool = False


class RunReport(BaseModel):
    """Outcome of one training run."""

    model_config = ConfigDict(frozen=True)

    name: str
    arm: str = "default"
    architecture: Architecture = Architecture.VIT
    seed: int
    block: BlockConfig = Field(default_factory=BlockConfig)
    graying: GrayingConfig = Field(default_factory=GrayingConfig)
    epochs: List[EpochRecord] = Field(default_factory=list)
    init_checksum: Optional[str] = None
    final_checksum: Optional[str] = None
    checkpoint_path: Optional[str] = None
    diverged: bool = False
    divergence_epoch: Optional[int] = None
    input_log_condition: Optional[float] = None
    condition: Optional[ConditionReport] = None
    normalization: Dict[str, List[float]] = Field(default_factory=dict)
    error: Optional[str] = None

    @property
    def init_accuracy(self) -> float:
        """Validation accuracy at initialization."""
        return self.epochs[0].val_accuracy if self.epochs else math.nan

    @property
    def final_accuracy(self) -> float:
        """Validation accuracy after the last completed epoch."""
        return self.epochs[-1].val_accuracy if self.epochs else math.nan

    @property
    def best_epoch(self) -> Optional[int]:
        """Epoch with the highest validation accuracy."""
        if not self.epochs:
            return None
        return max(self.epochs, key=lambda e: (e.val_accuracy, -e.epoch)).epoch

    @property
    def best_accuracy(self) -> float:
        """Highest validation accuracy over all epochs."""
        return max((e.val_accuracy for e in self.epochs), default=math.nan)

    def curve_rows(self) -> List[Dict[str, Any]]:
        """One dictionary per epoch, suitable for CSV emission."""
        return [{"arm": self.arm, **record.model_dump()} for record in self.epochs]

    def summary(self) -> Dict[str, Any]:
        """Final metrics without the per-epoch curves."""
        return {
            "name": self.name,
            "arm": self.arm,
            "architecture": self.architecture.value,
            "seed": self.seed,
            "init_accuracy": self.init_accuracy,
            "final_accuracy": self.final_accuracy,
            "best_accuracy": self.best_accuracy,
            "best_epoch": self.best_epoch,
            "diverged": self.diverged,
            "divergence_epoch": self.divergence_epoch,
            "input_log_condition": self.input_log_condition,
            "init_checksum": self.init_checksum,
            "final_checksum": self.final_checksum,
            "checkpoint_path": self.checkpoint_path,
            "error": self.error,
        }


class AblationReport(BaseModel):
    """Comparison of training runs that differ only in their skip connections."""

    model_config = ConfigDict(frozen=True)

    name: str
    seed: int
    architecture: Architecture
    arms: List[RunReport] = Field(default_factory=list)
    normalization: Dict[str, List[float]] = Field(default_factory=dict)

    def arm(self, name: str) -> RunReport:
        """Report of the arm with the given name."""
        for report in self.arms:
            if report.arm == name:
                return report
        raise KeyError(name)

    def table(self) -> List[Dict[str, Any]]:
        """Final metrics of every arm."""
        return [report.summary() for report in self.arms]

    def curves(self) -> List[Dict[str, Any]]:
        """Per-epoch metrics of every arm, aligned by epoch."""
        return [row for report in self.arms for row in report.curve_rows()]


class SweepReport(BaseModel):
    """Training runs over graying methods and amplification coefficients."""

    model_config = ConfigDict(frozen=True)

    name: str
    seed: int
    runs: List[RunReport] = Field(default_factory=list)
    normalization: Dict[str, List[float]] = Field(default_factory=dict)

    def table(self) -> List[Dict[str, Any]]:
        """One row per run with its graying settings and final metrics."""
        rows = []
        for report in self.runs:
            row = {
                "method": report.graying.method.value,
                "epsilon": report.graying.epsilon,
                **report.summary(),
            }
            if report.condition is not None:
                row["token_in"] = report.condition.mean("token_in")
                row["token_out"] = report.condition.mean("token_out")
            rows.append(row)
        return rows

    def layer_rows(self) -> List[Dict[str, Any]]:
        """Per-layer condition records of every run."""
        rows = []
        for report in self.runs:
            if report.condition is None:
                continue
            for record in report.condition.records:
                rows.append(
                    {
                        "arm": report.arm,
                        "method": report.graying.method.value,
                        "epsilon": report.graying.epsilon,
                        **record.model_dump(),
                    },
                )
        return rows

    def trace_rows(self) -> List[Dict[str, Any]]:
        """Per-epoch condition trace of the attention block outputs of every run."""
        return [
            {
                "arm": report.arm,
                "epoch": record.epoch,
                "sab_log_condition": record.sab_log_condition,
            }
            for report in self.runs
            for record in report.epochs
        ]


class RunRecord(BaseModel):
    """A run as stored in the run library."""

    model_config = ConfigDict(from_attributes=True)

    id: uuid.UUID
    name: str
    kind: str
    arm: str
    seed: int
    status: str
    config: Dict[str, Any] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)
    created_at: Optional[datetime] = None
    updated_at: Optional[datetime] = None


class RunMetric(BaseModel):
    """A scalar metric of a run at an epoch."""

    model_config = ConfigDict(from_attributes=True)

    id: uuid.UUID
    run_id: uuid.UUID
    epoch: int
    key: str
    value: Optional[float] = None


class RunArtifact(BaseModel):
    """A file produced by a run."""

    model_config = ConfigDict(from_attributes=True)

    id: uuid.UUID
    run_id: uuid.UUID
    kind: str
    file_path: str
    checksum: Optional[str] = None
    created_at: Optional[datetime] = None
