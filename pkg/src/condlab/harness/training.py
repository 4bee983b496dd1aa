# -*- encoding: utf-8 -*-
"""Training loop of the vision transformer and ConvMixer classifiers.

A run is fully determined by its configuration: the dataset, the initial
weights, the minibatch order and the profiling subset are all drawn from
independent streams of the configured seed. Token graying is applied once,
when the dataset is loaded, so train and evaluation inputs are grayed
identically and before patch embedding.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Dict, NamedTuple, Optional, Tuple, Union

import numpy as np

from condlab import graying, io, linalg
from condlab.autodiff import ops
from condlab.autodiff.tape import Tape
from condlab.diagnostics.profile import layer_condition_profile
from condlab.harness.datasets import load_dataset
from condlab.harness.optim import build_optimizer
from condlab.schema.core import (
    BlockConfig,
    ConditionReport,
    ConvMixerModelParams,
    GrayingMethod,
    ModelParams,
    RngStream,
)
from condlab.schema.exception import (
    CondlabConfigError,
    CondlabError,
    CondlabModelError,
    CondlabNonFiniteError,
    CondlabStorageError,
)
from condlab.schema.experiment import (
    Architecture,
    DatasetHandle,
    EpochRecord,
    ExperimentConfig,
    ModelSpec,
    RunReport,
)
from condlab.vitcore.convmixer import (
    BatchStats,
    convmixer_forward_tokens,
    update_running_stats,
)
from condlab.vitcore.init import init_convmixer, init_vit
from condlab.vitcore.vit import vit_forward_tokens

logger = logging.getLogger("condlab")

# stream ids of the independent random streams of a run
STREAM_DATA = 1
STREAM_INIT = 2
STREAM_SHUFFLE = 3
STREAM_PROFILE = 4

EVAL_BATCH_SIZE = 256

Model = Union[ModelParams, ConvMixerModelParams]


class TokenSplits(NamedTuple):
    """Patchified and grayed token matrices of both dataset splits."""

    train: np.ndarray
    train_labels: np.ndarray
    val: np.ndarray
    val_labels: np.ndarray
    profile: np.ndarray


def prepare_tokens(config: ExperimentConfig, dataset: DatasetHandle) -> TokenSplits:
    """Patchify and gray both splits, and pick the profiling subset.

    The profiling subset is the first `profile_samples` entries of a seeded
    permutation of the validation split (of the training split if there is no
    validation split).
    """
    patch_size = config.model.patch_size
    train = graying.patchify(dataset.train_images, patch_size)
    val = graying.patchify(dataset.val_images, patch_size)
    if config.graying.method != GrayingMethod.NONE:
        logger.info(
            "Graying %d token matrices (%s, epsilon %.3f).",
            train.shape[0] + val.shape[0],
            config.graying.method.value,
            config.graying.epsilon,
        )
        train = graying.gray_tokens(train, config.graying)
        if val.shape[0]:
            val = graying.gray_tokens(val, config.graying)
    pool = val if val.shape[0] else train
    order = RngStream(seed=config.seed, stream_id=STREAM_PROFILE).generator().permutation(
        pool.shape[0],
    )
    profile = pool[order[: config.profile_samples]]
    return TokenSplits(train, dataset.train_labels, val, dataset.val_labels, profile)


def build_model(
    spec: ModelSpec,
    block: BlockConfig,
    image_shape: Tuple[int, int, int],
    classes: int,
    seed: int,
) -> Model:
    """Initialize the model of a run.

    The weights depend only on the seed and the dimensions. For ConvMixer
    models, `block.skip_sab` toggles the skip connection of the depthwise stage.
    """
    stream = RngStream(seed=seed, stream_id=STREAM_INIT)
    if spec.architecture == Architecture.VIT:
        return init_vit(spec, image_shape, classes, stream, block=block)
    return init_convmixer(spec, image_shape, classes, stream, skip=block.skip_sab)


def model_arrays(model: Model) -> Dict[str, np.ndarray]:
    """All tensors of a model including batch norm running statistics."""
    arrays = dict(model.arrays())
    if isinstance(model, ConvMixerModelParams):
        arrays.update(model.buffers())
    return arrays


def forward_logits(model: Model, tokens, training: bool = False, stats: Optional[BatchStats] = None):
    """Logits of a batch of token matrices of shape (B, n, p*p*C)."""
    if isinstance(model, ConvMixerModelParams):
        return convmixer_forward_tokens(tokens, model, training=training, stats=stats)
    return vit_forward_tokens(tokens, model)


def _log_softmax_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))
    return float(-np.sum(log_probs[np.arange(labels.size), labels]))


def evaluate(
    model: Model,
    tokens: np.ndarray,
    labels: np.ndarray,
    batch_size: int = EVAL_BATCH_SIZE,
) -> Tuple[float, float]:
    """Mean cross-entropy loss and accuracy on a split.

    Returns:
        Tuple[float, float]: Loss and accuracy; both are NaN for an empty
            split or if the forward pass overflows.
    """
    if labels.size == 0:
        return math.nan, math.nan
    total_loss, correct = 0.0, 0
    with np.errstate(all="ignore"):
        try:
            for start in range(0, labels.size, batch_size):
                batch_labels = labels[start : start + batch_size]
                logits = np.asarray(forward_logits(model, tokens[start : start + batch_size]))
                total_loss += _log_softmax_loss(logits, batch_labels)
                correct += int(np.sum(np.argmax(logits, axis=-1) == batch_labels))
        except (CondlabModelError, CondlabNonFiniteError):
            return math.nan, math.nan
    return total_loss / labels.size, correct / labels.size


def train_step(
    model: Model,
    optimizer,
    tokens: np.ndarray,
    labels: np.ndarray,
) -> Tuple[Model, float]:
    """Run one optimizer step on a minibatch.

    Returns:
        Tuple[Model, float]: The updated model and the minibatch loss. If the
            loss is not finite or the forward pass overflows, the model is
            returned unchanged with a NaN loss.
    """
    tape = Tape()
    arrays = model.arrays()
    leaves = {name: tape.leaf(value) for name, value in arrays.items()}
    stats: Optional[BatchStats] = {} if isinstance(model, ConvMixerModelParams) else None
    with np.errstate(all="ignore"):
        try:
            logits = forward_logits(
                model.with_arrays(leaves),
                tape.constant(tokens),
                training=True,
                stats=stats,
            )
        except (CondlabModelError, CondlabNonFiniteError):
            return model, math.nan
        loss = ops.cross_entropy(logits, labels)
        value = float(loss.value)
        if not math.isfinite(value):
            return model, value
        grads = tape.backward(loss).of(leaves)
    updated = model.with_arrays(optimizer.step(arrays, grads))
    if stats is not None:
        updated = update_running_stats(updated, stats)
    return updated, value


def _all_finite(model: Model) -> bool:
    return all(np.all(np.isfinite(value)) for value in model.arrays().values())


def sab_condition(model: Model, profile: np.ndarray) -> Tuple[Optional[float], Optional[ConditionReport]]:
    """Layer-mean ln condition number of the attention block output with skip."""
    if not isinstance(model, ModelParams) or not model.layers or profile.shape[0] == 0:
        return None, None
    try:
        report = layer_condition_profile(model, profile)
    except (CondlabModelError, CondlabNonFiniteError):
        return None, None
    return report.mean("sa_skip"), report


def input_log_condition(tokens: np.ndarray) -> Optional[float]:
    """Mean ln condition number of a stack of token matrices."""
    if tokens.shape[0] == 0:
        return None
    with np.errstate(invalid="ignore"):
        return float(np.mean([linalg.log_condition_number(x, strict=False) for x in tokens]))


def checkpoint_file(config: ExperimentConfig, arm: str) -> Optional[Path]:
    """Location of the final checkpoint of a run, None if none is written."""
    if not config.save_checkpoint or config.output_dir is None:
        return None
    return Path(config.output_dir) / f"{config.name}-{arm}.cmat"


def checkpoint_metadata(
    config: ExperimentConfig,
    model: Model,
    image_shape: Tuple[int, int, int],
    arm: str,
    epochs: int,
) -> Dict:
    """Manifest entries describing the model of a checkpoint."""
    return {
        "name": config.name,
        "arm": arm,
        "seed": config.seed,
        "architecture": config.model.architecture.value,
        "model": config.model.model_dump(mode="json"),
        "block": config.block.model_dump(mode="json"),
        "graying": config.graying.model_dump(mode="json"),
        "image_shape": list(image_shape),
        "classes": model.classes,
        "epochs": epochs,
    }


def load_model(path: Union[str, Path]) -> Tuple[Model, Dict]:
    """Restore a model from a checkpoint written by `train`.

    Raises:
        CondlabStorageError: If the checkpoint cannot be read or does not
            describe a model.
    """
    arrays, manifest = io.load_checkpoint(path)
    try:
        spec = ModelSpec.model_validate(manifest["model"])
        block = BlockConfig.model_validate(manifest["block"])
        image_shape = tuple(manifest["image_shape"])
        classes = int(manifest["classes"])
    except (KeyError, ValueError) as e:
        raise CondlabStorageError(f"checkpoint {path} does not describe a model: {e}") from None
    skeleton = build_model(spec, block, image_shape, classes, seed=int(manifest.get("seed", 0)))
    expected = set(model_arrays(skeleton))
    if expected != set(arrays):
        raise CondlabStorageError(
            f"checkpoint {path} tensors do not match the model: "
            f"missing {sorted(expected - set(arrays))}, unexpected {sorted(set(arrays) - expected)}",
        )
    return skeleton.with_arrays(arrays), manifest


def train(
    config: ExperimentConfig,
    dataset: Optional[DatasetHandle] = None,
    arm: str = "default",
    tokens: Optional[TokenSplits] = None,
) -> RunReport:
    """Train a model as described by an experiment configuration.

    Epoch 0 of the report holds the metrics at initialization. A non-finite
    training loss ends the run; the event is recorded with its epoch and the
    metrics of the last finite parameters.

    Args:
        config (ExperimentConfig): The experiment.
        dataset (DatasetHandle, optional): The dataset. Loaded from
            `config.dataset` if not given.
        arm (str): Name of the run within an experiment.
        tokens (TokenSplits, optional): Already prepared tokens of `dataset`.

    Raises:
        CondlabConfigError: If the model does not fit the dataset.
        CondlabStorageError: If the checkpoint cannot be written.

    Returns:
        RunReport: Loss and accuracy curves, condition trace and final metrics.
    """
    if dataset is None:
        dataset = load_dataset(config.dataset, RngStream(seed=config.seed, stream_id=STREAM_DATA))
    try:
        model = build_model(config.model, config.block, dataset.image_shape, dataset.classes, config.seed)
    except CondlabError as e:
        raise CondlabConfigError(f"model does not fit the dataset: {e}") from None
    if tokens is None:
        tokens = prepare_tokens(config, dataset)
    optimizer = build_optimizer(config.optimizer)
    init_checksum = io.checkpoint_checksum(model_arrays(model))
    logger.info(
        "Run %s/%s: %s with %d layers, %d epochs, init checksum %s.",
        config.name,
        arm,
        config.model.architecture.value,
        config.model.layers,
        config.epochs,
        init_checksum,
    )

    def record(epoch: int, train_loss: Optional[float], diverged: bool = False) -> EpochRecord:
        val_loss, val_accuracy = evaluate(model, tokens.val, tokens.val_labels)
        if math.isnan(val_accuracy):
            val_accuracy = 0.0
        trace = sab_condition(model, tokens.profile)[0] if config.trace_condition else None
        return EpochRecord(
            epoch=epoch,
            train_loss=train_loss,
            val_loss=None if math.isnan(val_loss) else val_loss,
            val_accuracy=val_accuracy,
            sab_log_condition=trace,
            diverged=diverged,
        )

    init_loss = evaluate(model, tokens.train, tokens.train_labels)[0]
    epochs = [record(0, None if math.isnan(init_loss) else init_loss)]
    divergence_epoch = None
    shuffle = RngStream(seed=config.seed, stream_id=STREAM_SHUFFLE)
    for epoch in range(1, config.epochs + 1):
        order = shuffle.generator(epoch).permutation(tokens.train_labels.size)
        total, seen = 0.0, 0
        for start in range(0, order.size, config.batch_size):
            index = order[start : start + config.batch_size]
            candidate, loss = train_step(model, optimizer, tokens.train[index], tokens.train_labels[index])
            if not math.isfinite(loss) or not _all_finite(candidate):
                divergence_epoch = epoch
                break
            model = candidate
            total += loss * index.size
            seen += index.size
        if divergence_epoch is not None:
            logger.warning("Run %s/%s diverged in epoch %d.", config.name, arm, epoch)
            epochs.append(record(epoch, math.nan, diverged=True))
            break
        epochs.append(record(epoch, total / seen if seen else None))
        logger.info(
            "Run %s/%s epoch %d: train loss %.4f, val accuracy %.4f.",
            config.name,
            arm,
            epoch,
            epochs[-1].train_loss if epochs[-1].train_loss is not None else math.nan,
            epochs[-1].val_accuracy,
        )

    final_arrays = model_arrays(model)
    final_checksum = io.checkpoint_checksum(final_arrays)
    path = checkpoint_file(config, arm)
    if path is not None:
        io.save_checkpoint(
            path,
            final_arrays,
            checkpoint_metadata(config, model, dataset.image_shape, arm, len(epochs) - 1),
        )
    condition = sab_condition(model, tokens.profile)[1]
    return RunReport(
        name=config.name,
        arm=arm,
        architecture=config.model.architecture,
        seed=config.seed,
        block=config.block,
        graying=config.graying,
        epochs=epochs,
        init_checksum=init_checksum,
        final_checksum=final_checksum,
        checkpoint_path=str(path) if path is not None else None,
        diverged=divergence_epoch is not None,
        divergence_epoch=divergence_epoch,
        input_log_condition=input_log_condition(tokens.profile),
        condition=condition,
        normalization=dataset.normalization,
    )
