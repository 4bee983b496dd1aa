# -*- encoding: utf-8 -*-
"""Dataset ingestion and generation.

Two sources are supported: the CIFAR-10 binary layout, where every record is
one label byte followed by 1024 red, 1024 green and 1024 blue pixel bytes in
row-major order, and a synthetic task of class-mean patterns plus Gaussian
noise that toy models learn within a few epochs.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from condlab.schema.core import RngStream
from condlab.schema.exception import CondlabDatasetError
from condlab.schema.experiment import DatasetHandle, DatasetSource, DatasetSpec

logger = logging.getLogger("condlab")

CIFAR10_IMAGE_SHAPE = (32, 32, 3)
CIFAR10_CLASSES = 10
CIFAR10_RECORD_BYTES = 1 + 32 * 32 * 3
# per-channel statistics of the CIFAR-10 training set after scaling to [0, 1]
CIFAR10_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR10_STD = (0.2470, 0.2435, 0.2616)


def parse_cifar10_records(payload: bytes, base_offset: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Decode a CIFAR-10 binary record stream.

    Args:
        payload (bytes): The raw file content.
        base_offset (int): Offset of the payload within a larger stream, used
            in error messages.

    Raises:
        CondlabDatasetError: If the length is not a multiple of the record size
            or a label byte is not a valid class.

    Returns:
        Tuple[np.ndarray, np.ndarray]: `uint8` images of shape (N, 32, 32, 3)
            and `int64` labels of shape (N,).
    """
    residue = len(payload) % CIFAR10_RECORD_BYTES
    if residue != 0:
        complete = len(payload) - residue
        raise CondlabDatasetError(
            f"truncated record stream: length {len(payload)} leaves a residue of "
            f"{residue} bytes modulo the record size {CIFAR10_RECORD_BYTES}",
            offset=base_offset + complete,
        )
    records = np.frombuffer(payload, dtype=np.uint8).reshape(-1, CIFAR10_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    invalid = np.flatnonzero(labels >= CIFAR10_CLASSES)
    if invalid.size:
        index = int(invalid[0])
        raise CondlabDatasetError(
            f"invalid label {labels[index]} in record {index}",
            offset=base_offset + index * CIFAR10_RECORD_BYTES,
        )
    images = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return np.ascontiguousarray(images), labels


def read_cifar10_file(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """Read one CIFAR-10 batch file."""
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise CondlabDatasetError(f"cannot read dataset file {path}: {e}") from None
    try:
        return parse_cifar10_records(payload)
    except CondlabDatasetError as e:
        raise CondlabDatasetError(f"{path}: {e.message}", offset=e.offset) from None


def _read_files(paths: List[Path]) -> Tuple[np.ndarray, np.ndarray]:
    parts = [read_cifar10_file(path) for path in paths]
    return (
        np.concatenate([images for images, _ in parts]),
        np.concatenate([labels for _, labels in parts]),
    )


def normalize_cifar10(images: np.ndarray) -> np.ndarray:
    """Scale `uint8` pixels to [0, 1] and standardize every channel."""
    scaled = images.astype(np.float64) / 255.0
    return (scaled - np.asarray(CIFAR10_MEAN)) / np.asarray(CIFAR10_STD)


def load_cifar10(
    path: Union[str, Path],
    val_fraction: float = 0.2,
    limit: Optional[int] = None,
    stream: Optional[RngStream] = None,
) -> DatasetHandle:
    """Load CIFAR-10 from its binary distribution.

    `path` is either a directory holding `data_batch_*.bin` (training) and
    optionally `test_batch.bin` (validation), or a single batch file. Without
    a separate validation file, a seeded permutation holds out `val_fraction`
    of the records.

    Args:
        path (str or Path): Directory or batch file.
        val_fraction (float): Held-out fraction for single-file datasets.
        limit (int, optional): Keep at most this many records per split.
        stream (RngStream, optional): Random stream of the hold-out permutation.

    Returns:
        DatasetHandle: The dataset, pixels scaled to [0, 1] and standardized
            per channel. The constants are recorded in `normalization`.
    """
    path = Path(path)
    stream = stream or RngStream(seed=0)
    if path.is_dir():
        train_files = sorted(path.glob("data_batch_*.bin"))
        if not train_files:
            raise CondlabDatasetError(f"no data_batch_*.bin files found in {path}")
        train_images, train_labels = _read_files(train_files)
        test_file = path / "test_batch.bin"
        if test_file.exists():
            val_images, val_labels = read_cifar10_file(test_file)
        else:
            val_images = train_images[:0]
            val_labels = train_labels[:0]
    else:
        images, labels = read_cifar10_file(path)
        order = stream.generator().permutation(labels.size)
        held_out = int(labels.size * val_fraction)
        val_index, train_index = order[:held_out], order[held_out:]
        train_images, train_labels = images[train_index], labels[train_index]
        val_images, val_labels = images[val_index], labels[val_index]
    if limit is not None:
        train_images, train_labels = train_images[:limit], train_labels[:limit]
        val_images, val_labels = val_images[:limit], val_labels[:limit]
    logger.info(
        "Loaded CIFAR-10 from %s: %d train, %d val records.",
        path,
        train_labels.size,
        val_labels.size,
    )
    return DatasetHandle(
        source=DatasetSource.CIFAR10,
        image_shape=CIFAR10_IMAGE_SHAPE,
        classes=CIFAR10_CLASSES,
        train_images=normalize_cifar10(train_images),
        train_labels=train_labels,
        val_images=normalize_cifar10(val_images),
        val_labels=val_labels,
        normalization={"mean": list(CIFAR10_MEAN), "std": list(CIFAR10_STD)},
    )


def _class_patterns(
    generator: np.random.Generator,
    classes: int,
    image_shape: Tuple[int, int, int],
) -> np.ndarray:
    """Smooth class-mean images of unit root mean square.

    Every pattern is a random mix of low-frequency cosine modes per channel.
    """
    height, width, channels = image_shape
    frequencies = 3
    rows = np.cos(np.pi * np.outer(np.arange(frequencies), np.arange(height) + 0.5) / height)
    cols = np.cos(np.pi * np.outer(np.arange(frequencies), np.arange(width) + 0.5) / width)
    weights = generator.standard_normal((classes, channels, frequencies, frequencies))
    patterns = np.einsum("kcuv,uh,vw->khwc", weights, rows, cols)
    rms = np.sqrt(np.mean(patterns**2, axis=(1, 2, 3), keepdims=True))
    return patterns / np.where(rms > 0.0, rms, 1.0)


def synth_dataset(
    classes: int,
    per_class: int,
    image_shape: Tuple[int, int, int],
    noise: float,
    stream: RngStream,
    val_fraction: float = 0.2,
) -> DatasetHandle:
    """Generate a classification task of class-mean patterns plus Gaussian noise.

    Every class contributes `per_class` samples; a seeded permutation assigns
    `val_fraction` of them to the validation split, so both splits are
    disjoint by construction.

    Args:
        classes (int): Number of classes.
        per_class (int): Samples per class.
        image_shape (Tuple[int, int, int]): Image shape (H, W, C).
        noise (float): Standard deviation of the per-pixel noise.
        stream (RngStream): Random stream; a fixed stream gives a byte-identical
            dataset.
        val_fraction (float): Held-out fraction.

    Returns:
        DatasetHandle: The dataset, with the class means attached.
    """
    patterns = _class_patterns(stream.generator(0), classes, tuple(image_shape))
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    images = patterns[labels] + noise * stream.generator(1).standard_normal(
        (labels.size, *image_shape),
    )
    order = stream.generator(2).permutation(labels.size)
    held_out = int(round(labels.size * val_fraction))
    val_index, train_index = order[:held_out], order[held_out:]
    return DatasetHandle(
        source=DatasetSource.SYNTHETIC,
        image_shape=tuple(image_shape),
        classes=classes,
        train_images=images[train_index],
        train_labels=labels[train_index],
        val_images=images[val_index],
        val_labels=labels[val_index],
        class_means=patterns,
    )


def nearest_mean_accuracy(dataset: DatasetHandle) -> float:
    """Validation accuracy of a nearest-class-mean classifier fit on the training split.

    Classes without training samples are never predicted. The accuracy is the
    difficulty baseline of a dataset.
    """
    if dataset.val_labels.size == 0:
        return float("nan")
    train = dataset.train_images.reshape(dataset.train_labels.size, -1)
    val = dataset.val_images.reshape(dataset.val_labels.size, -1)
    present = np.unique(dataset.train_labels)
    means = np.stack([train[dataset.train_labels == k].mean(axis=0) for k in present])
    distances = (
        np.sum(val**2, axis=1, keepdims=True)
        - 2.0 * val @ means.T
        + np.sum(means**2, axis=1)
    )
    predictions = present[np.argmin(distances, axis=1)]
    return float(np.mean(predictions == dataset.val_labels))


def load_dataset(spec: DatasetSpec, stream: RngStream) -> DatasetHandle:
    """Load or generate the dataset described by its settings."""
    if spec.source == DatasetSource.CIFAR10:
        return load_cifar10(spec.path, val_fraction=spec.val_fraction, limit=spec.limit, stream=stream)
    dataset = synth_dataset(
        classes=spec.classes,
        per_class=spec.per_class,
        image_shape=(spec.image_size, spec.image_size, spec.channels),
        noise=spec.noise,
        stream=stream,
        val_fraction=spec.val_fraction,
    )
    if spec.limit is not None:
        dataset = dataset.model_copy(
            update={
                "train_images": dataset.train_images[: spec.limit],
                "train_labels": dataset.train_labels[: spec.limit],
                "val_images": dataset.val_images[: spec.limit],
                "val_labels": dataset.val_labels[: spec.limit],
            },
        )
    return dataset
