# -*- encoding: utf-8 -*-
# ruff: noqa: F401
"""Datasets, training, experiments, reports and the command line interface."""

from .datasets import (
    load_cifar10,
    load_dataset,
    nearest_mean_accuracy,
    parse_cifar10_records,
    synth_dataset,
)
from .experiments import ablation_arms, run_skip_ablation, run_tg_sweep
from .optim import SGD, AdamW, build_optimizer
from .training import evaluate, load_model, prepare_tokens, train
