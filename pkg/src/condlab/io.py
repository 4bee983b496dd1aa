# -*- encoding: utf-8 -*-
"""Serialization of matrices and model checkpoints.

A matrix container is an 8-byte magic, the row and column counts as
little-endian u32 and the entries as little-endian float64 in row-major order.
A checkpoint is a sequence of named matrix containers behind a small header,
accompanied by a JSON manifest holding the original tensor shapes, the model
configuration and a checksum of the binary payload.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from condlab.linalg import as_matrix
from condlab.schema.exception import CondlabStorageError
from condlab.utils import md5_bytes

logger = logging.getLogger("condlab")

MATRIX_MAGIC = b"CONDLAB\x00"
CHECKPOINT_MAGIC = b"CONDCKPT"

_MATRIX_HEADER = struct.Struct("<8sII")
_CHECKPOINT_HEADER = struct.Struct("<8sI")
_NAME_LENGTH = struct.Struct("<H")

PathLike = Union[str, Path]


def encode_matrix(a) -> bytes:
    """Encode a matrix into the binary container format."""
    matrix = as_matrix(a)
    rows, cols = matrix.shape
    return _MATRIX_HEADER.pack(MATRIX_MAGIC, rows, cols) + matrix.astype("<f8").tobytes(
        order="C",
    )


def decode_matrix(buffer: bytes, offset: int = 0) -> Tuple[np.ndarray, int]:
    """Decode one matrix container starting at `offset`.

    Returns:
        Tuple[np.ndarray, int]: The matrix and the offset just past it.

    Raises:
        CondlabStorageError: If the magic does not match or the payload is
            truncated.
    """
    if len(buffer) - offset < _MATRIX_HEADER.size:
        raise CondlabStorageError(f"truncated matrix header at byte {offset}")
    magic, rows, cols = _MATRIX_HEADER.unpack_from(buffer, offset)
    if magic != MATRIX_MAGIC:
        raise CondlabStorageError(f"bad matrix magic {magic!r} at byte {offset}")
    start = offset + _MATRIX_HEADER.size
    end = start + rows * cols * 8
    if len(buffer) < end:
        raise CondlabStorageError(
            f"truncated matrix payload at byte {start}: expected {rows * cols * 8} "
            f"bytes, found {len(buffer) - start}",
        )
    matrix = np.frombuffer(buffer, dtype="<f8", count=rows * cols, offset=start)
    return matrix.reshape(rows, cols).astype(np.float64), end


def write_matrix(path: PathLike, a) -> None:
    """Write a matrix to a binary container file."""
    Path(path).write_bytes(encode_matrix(a))


def read_matrix(path: PathLike) -> np.ndarray:
    """Read a matrix from a binary container file."""
    try:
        buffer = Path(path).read_bytes()
    except OSError as e:
        raise CondlabStorageError(f"cannot read matrix file {path}: {e}") from None
    matrix, end = decode_matrix(buffer)
    if end != len(buffer):
        raise CondlabStorageError(f"{len(buffer) - end} trailing bytes in {path}")
    return matrix


def write_matrices(path: PathLike, matrices) -> None:
    """Write several matrices, one container after the other, to a file."""
    Path(path).write_bytes(b"".join(encode_matrix(m) for m in matrices))


def read_matrices(path: PathLike) -> list:
    """Read all consecutive matrix containers of a file."""
    try:
        buffer = Path(path).read_bytes()
    except OSError as e:
        raise CondlabStorageError(f"cannot read matrix file {path}: {e}") from None
    matrices, offset = [], 0
    while offset < len(buffer):
        matrix, offset = decode_matrix(buffer, offset)
        matrices.append(matrix)
    return matrices


def write_matrix_csv(path: PathLike, a) -> None:
    """Write a matrix as comma-separated text with round-trip precision."""
    np.savetxt(path, as_matrix(a), delimiter=",", fmt="%.17g")


def read_matrix_csv(path: PathLike) -> np.ndarray:
    """Read a matrix from comma-separated text."""
    try:
        matrix = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as e:
        raise CondlabStorageError(f"cannot read matrix CSV {path}: {e}") from None
    return as_matrix(matrix, str(path))


def _as_record_matrix(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array, dtype=np.float64)
    if array.ndim == 2:  # noqa: PLR2004
        return array
    if array.ndim < 2:  # noqa: PLR2004
        return array.reshape(1, -1)
    return array.reshape(array.shape[0], -1)


def encode_checkpoint(arrays: Dict[str, np.ndarray]) -> bytes:
    """Encode named tensors into the checkpoint payload, sorted by name."""
    parts = [_CHECKPOINT_HEADER.pack(CHECKPOINT_MAGIC, len(arrays))]
    for name in sorted(arrays):
        encoded_name = name.encode("utf-8")
        parts.append(_NAME_LENGTH.pack(len(encoded_name)))
        parts.append(encoded_name)
        parts.append(encode_matrix(_as_record_matrix(arrays[name])))
    return b"".join(parts)


def decode_checkpoint(buffer: bytes) -> Dict[str, np.ndarray]:
    """Decode a checkpoint payload into named matrices."""
    if len(buffer) < _CHECKPOINT_HEADER.size:
        raise CondlabStorageError("truncated checkpoint header")
    magic, count = _CHECKPOINT_HEADER.unpack_from(buffer, 0)
    if magic != CHECKPOINT_MAGIC:
        raise CondlabStorageError(f"bad checkpoint magic {magic!r}")
    offset = _CHECKPOINT_HEADER.size
    records: Dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(buffer) - offset < _NAME_LENGTH.size:
            raise CondlabStorageError(f"truncated record name at byte {offset}")
        (length,) = _NAME_LENGTH.unpack_from(buffer, offset)
        offset += _NAME_LENGTH.size
        name = buffer[offset : offset + length].decode("utf-8")
        offset += length
        records[name], offset = decode_matrix(buffer, offset)
    return records


def checkpoint_checksum(arrays: Dict[str, np.ndarray]) -> str:
    """md5 checksum of the checkpoint payload of the given tensors."""
    return md5_bytes(encode_checkpoint(arrays))


def manifest_path(path: PathLike) -> Path:
    """Location of the JSON manifest belonging to a checkpoint file."""
    return Path(path).with_suffix(".json")


def save_checkpoint(
    path: PathLike,
    arrays: Dict[str, np.ndarray],
    metadata: Dict[str, Any],
) -> str:
    """Write a checkpoint file and its JSON manifest.

    Args:
        path (PathLike): Location of the binary checkpoint. The manifest is
            written next to it with a `.json` suffix.
        arrays (Dict[str, np.ndarray]): Named tensors.
        metadata (Dict[str, Any]): JSON-serializable model configuration and
            run metadata stored in the manifest.

    Returns:
        str: The md5 checksum of the binary payload.
    """
    payload = encode_checkpoint(arrays)
    checksum = md5_bytes(payload)
    manifest = {
        "format": "condlab-checkpoint",
        "checksum": checksum,
        "shapes": {name: list(np.shape(arrays[name])) for name in sorted(arrays)},
        **metadata,
    }
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
        manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as e:
        raise CondlabStorageError(f"cannot write checkpoint {path}: {e}") from None
    logger.info("Wrote checkpoint %s (%d tensors).", path, len(arrays))
    return checksum


def load_checkpoint(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a checkpoint and its manifest.

    Returns:
        Tuple[Dict[str, np.ndarray], Dict[str, Any]]: The tensors in their
            original shapes and the manifest.

    Raises:
        CondlabStorageError: If a file is missing, malformed, or the payload
            does not match the manifest checksum.
    """
    path = Path(path)
    try:
        payload = path.read_bytes()
        manifest = json.loads(manifest_path(path).read_text())
    except (OSError, ValueError) as e:
        raise CondlabStorageError(f"cannot read checkpoint {path}: {e}") from None
    if md5_bytes(payload) != manifest.get("checksum"):
        raise CondlabStorageError(f"checksum mismatch for checkpoint {path}")
    records = decode_checkpoint(payload)
    shapes = manifest.get("shapes", {})
    arrays = {
        name: matrix.reshape(shapes.get(name, matrix.shape))
        for name, matrix in records.items()
    }
    return arrays, manifest
