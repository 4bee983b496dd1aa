# -*- encoding: utf-8 -*-
"""Multi-run experiments: skip-connection ablations and token graying sweeps.

The runs of an experiment share the seed and the dataset, and therefore the
initial weights. They are independent of each other and may train
concurrently; the merged report is ordered like the arm list.
"""

from __future__ import annotations

import logging
from typing import List, Optional, Sequence, Tuple

from condlab.harness.datasets import load_dataset
from condlab.harness.training import STREAM_DATA, TokenSplits, prepare_tokens, train
from condlab.schema.core import BlockConfig, GrayingConfig, GrayingMethod, RngStream
from condlab.schema.exception import CondlabConfigError, CondlabShapeError
from condlab.schema.experiment import (
    AblationReport,
    Architecture,
    DatasetHandle,
    ExperimentConfig,
    RunReport,
    SweepReport,
)
from condlab.utils import run_batched

logger = logging.getLogger("condlab")

BASELINE_ARM = "baseline"


def ablation_arms(config: ExperimentConfig) -> List[Tuple[str, BlockConfig]]:
    """Arm names and block configurations of a skip ablation.

    Vision transformers get the arms `full`, `no_ffn_skip` and `no_sab_skip`;
    ConvMixers get `skip` and `no_skip`. The normalization placement of the
    base configuration is kept in every arm.
    """
    prenorm = config.block.prenorm
    if config.model.architecture == Architecture.CONVMIXER:
        return [
            ("skip", BlockConfig(skip_sab=True, skip_ffn=True, prenorm=prenorm)),
            ("no_skip", BlockConfig(skip_sab=False, skip_ffn=True, prenorm=prenorm)),
        ]
    return [
        ("full", BlockConfig(skip_sab=True, skip_ffn=True, prenorm=prenorm)),
        ("no_ffn_skip", BlockConfig(skip_sab=True, skip_ffn=False, prenorm=prenorm)),
        ("no_sab_skip", BlockConfig(skip_sab=False, skip_ffn=True, prenorm=prenorm)),
    ]


def _failed_run(config: ExperimentConfig, arm: str, error: Exception) -> RunReport:
    logger.error("Run %s/%s failed: %s", config.name, arm, error)
    return RunReport(
        name=config.name,
        arm=arm,
        architecture=config.model.architecture,
        seed=config.seed,
        block=config.block,
        graying=config.graying,
        error=f"{type(error).__name__}: {error}",
    )


def _train_arms(
    runs: Sequence[Tuple[str, ExperimentConfig]],
    dataset: DatasetHandle,
    tokens: Optional[TokenSplits],
    max_threads: Optional[int],
) -> List[RunReport]:
    def run_arm(_index: int, run: Tuple[str, ExperimentConfig]) -> RunReport:
        arm, config = run
        try:
            return train(config, dataset=dataset, arm=arm, tokens=tokens)
        except Exception as e:  # noqa: BLE001
            return _failed_run(config, arm, e)

    return run_batched(run_arm, list(runs), max_threads=max_threads, batch_size=1, description="runs")


def run_skip_ablation(
    config: ExperimentConfig,
    max_threads: Optional[int] = None,
) -> AblationReport:
    """Train one run per skip-connection arm with shared seed and data.

    A failing arm is recorded with its error and does not abort the others.

    Args:
        config (ExperimentConfig): The base configuration; its block
            configuration is replaced per arm.
        max_threads (int, optional): Number of arms trained concurrently.

    Raises:
        CondlabConfigError: If the patch size does not divide the images.

    Returns:
        AblationReport: The per-arm reports, ordered like `ablation_arms`.
    """
    dataset = load_dataset(config.dataset, RngStream(seed=config.seed, stream_id=STREAM_DATA))
    try:
        tokens = prepare_tokens(config, dataset)
    except CondlabShapeError as e:
        raise CondlabConfigError(f"model does not fit the dataset: {e}") from None
    runs = [
        (arm, config.model_copy(update={"block": block}))
        for arm, block in ablation_arms(config)
    ]
    logger.info("Skip ablation %s: arms %s.", config.name, [arm for arm, _ in runs])
    reports = _train_arms(runs, dataset, tokens, max_threads)
    return AblationReport(
        name=config.name,
        seed=config.seed,
        architecture=config.model.architecture,
        arms=reports,
        normalization=dataset.normalization,
    )


def sweep_arm_name(graying: GrayingConfig) -> str:
    """Arm name of a graying configuration, e.g. `svd_0.7`."""
    if graying.method == GrayingMethod.NONE:
        return BASELINE_ARM
    return f"{graying.method.value}_{graying.epsilon:g}"


def run_tg_sweep(
    config: ExperimentConfig,
    epsilons: Sequence[float],
    methods: Sequence[GrayingMethod] = (GrayingMethod.SVD, GrayingMethod.DCT),
    include_baseline: bool = True,
    max_threads: Optional[int] = None,
) -> SweepReport:
    """Train one run per (graying method, epsilon) on a shared dataset.

    Args:
        config (ExperimentConfig): The base configuration; its graying
            configuration is replaced per run.
        epsilons (Sequence[float]): Amplification coefficients in (0, 1].
        methods (Sequence[GrayingMethod]): Graying methods.
        include_baseline (bool): Also train an ungrayed baseline run.
        max_threads (int, optional): Number of runs trained concurrently.

    Returns:
        SweepReport: Per-run reports with final metrics, per-layer condition
            profiles and the per-epoch condition trace.
    """
    dataset = load_dataset(config.dataset, RngStream(seed=config.seed, stream_id=STREAM_DATA))
    gray_configs = [GrayingConfig(method=GrayingMethod.NONE)] if include_baseline else []
    gray_configs += [
        GrayingConfig(method=method, epsilon=epsilon, rescale=config.graying.rescale)
        for method in methods
        if method != GrayingMethod.NONE
        for epsilon in epsilons
    ]
    runs = [
        (sweep_arm_name(graying), config.model_copy(update={"graying": graying}))
        for graying in gray_configs
    ]
    logger.info("Graying sweep %s: runs %s.", config.name, [arm for arm, _ in runs])
    reports = _train_arms(runs, dataset, None, max_threads)
    return SweepReport(
        name=config.name,
        seed=config.seed,
        runs=reports,
        normalization=dataset.normalization,
    )
