"""Utility functions used by condlab."""
from __future__ import annotations

import hashlib
import logging
import math
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import Callable, List, Optional, Sequence, TypeVar, Union

import numpy as np

from condlab.config import get_settings

logger = logging.getLogger("condlab")

T = TypeVar("T")
R = TypeVar("R")


def md5sum(file_path):
    """Compute md5 checksum of file found under the given file_path."""
    hash_md5 = hashlib.md5()  # noqa: S324
    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            hash_md5.update(chunk)
    return hash_md5.hexdigest()


def md5_bytes(payload: bytes) -> str:
    """Compute md5 checksum of an in-memory byte string."""
    return hashlib.md5(payload).hexdigest()  # noqa: S324


def ensure_uuid(target_id: Optional[Union[str, uuid.UUID]] = None) -> uuid.UUID:
    """Take a string or a UUID and return the same value as a guaranteed UUID.

    Args:
        target_id (Union[str, uuid.UUID]): The target ID to convert to UUID type.

    Returns:
        uuid.UUID: The given target_id, converted to UUID. None if None was passed.
    """
    if target_id is not None and isinstance(target_id, str) and target_id != "":
        return uuid.UUID(target_id)
    if isinstance(target_id, uuid.UUID):
        return target_id
    return None


def _format_duration(seconds: float) -> str:
    return time.strftime("%H:%M:%S", time.gmtime(max(seconds, 0.0)))


def run_batched(
    func: Callable[[int, T], R],
    items: Sequence[T],
    max_threads: Optional[int] = None,
    batch_size: Optional[int] = None,
    description: str = "items",
) -> List[R]:
    """Run a function over a list of items, multithreaded in batches.

    The items are split into batches of `batch_size` which are processed by a
    thread pool of `max_threads` workers. `func` receives the index of the item
    in `items` and the item itself. Results are returned in input order, so the
    output does not depend on scheduling. The first error (by item index) is
    re-raised after all batches have finished.

    Args:
        func (Callable[[int, T], R]): Function applied to every `(index, item)`.
        items (Sequence[T]): The items to process.
        max_threads (int, optional): Number of worker threads. Defaults to the
            `max_threads` configuration value.
        batch_size (int, optional): Number of items per batch. Defaults to the
            `batch_size` configuration value.
        description (str): Name of the items, used for logging.

    Returns:
        List[R]: The results, ordered like `items`.
    """
    config = get_settings()
    max_threads = max_threads or config.max_threads
    batch_size = batch_size or config.batch_size
    total = len(items)
    if total == 0:
        return []
    if max_threads <= 1 or total <= batch_size:
        return [func(i, item) for i, item in enumerate(items)]

    batches = [range(i, min(i + batch_size, total)) for i in range(0, total, batch_size)]
    start_time = time.time()

    def run_batch(batch_index: int, indices: range) -> List[R]:
        batch_start_time = time.time()
        results = [func(i, items[i]) for i in indices]
        batch_end_time = time.time()
        total_elapsed_time = batch_end_time - start_time
        estimated_total_time = total_elapsed_time / (batch_index + 1) * len(batches)
        logger.debug(
            "Finished batch %d/%d of %s. Time taken for this batch: %s - "
            "Estimated remaining time: %s",
            batch_index + 1,
            len(batches),
            description,
            _format_duration(batch_end_time - batch_start_time),
            _format_duration(estimated_total_time - total_elapsed_time),
        )
        return results

    with ThreadPoolExecutor(max_workers=max_threads) as executor:
        futures = [
            executor.submit(run_batch, batch_index, indices)
            for batch_index, indices in enumerate(batches)
        ]
    all_results: List[R] = []
    for future in futures:
        all_results.extend(future.result())
    return all_results


def pretty_print(data, indent=0):
    """Helper function for pretty printing."""
    result = ""
    if isinstance(data, dict):
        for key, value in data.items():
            result += "\t" * indent + str(key) + ": "
            if isinstance(value, (dict, list)):
                result += "\n" + pretty_print(value, indent + 1)
            else:
                result += str(value) + "\n"
    elif isinstance(data, list):
        for item in data:
            if isinstance(item, (dict, list)):
                result += pretty_print(item, indent + 1)
            else:
                result += "\t" * indent + str(item) + "\n"
    return result


def to_jsonable(obj):
    """Convert a value into something `json` can serialize.

    Non-finite floats become strings ("inf", "-inf", "nan"), since JSON has no
    literal for them. Nested mutable containers are plain lists and dicts.
    """
    if isinstance(obj, uuid.UUID):
        return str(obj)
    if isinstance(obj, (datetime, date)):
        return obj.isoformat()
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (set, tuple)):
        return to_jsonable(list(obj))
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, list):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    return obj
