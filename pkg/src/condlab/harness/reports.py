# -*- encoding: utf-8 -*-
"""CSV and JSON report emission.

Report files hold only values that are determined by the configuration and
the seed. Timestamps, file checksums and the software version live in the run
manifest `manifest.json` alone, so reports of repeated runs compare equal
byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
from datetime import datetime, timezone
from enum import Enum
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from condlab.schema.exception import CondlabStorageError
from condlab.utils import md5sum, to_jsonable

logger = logging.getLogger("condlab")

PathLike = Union[str, Path]
MANIFEST_NAME = "manifest.json"


class ReportFormat(str, Enum):
    """File formats of tabular reports."""

    CSV = "csv"
    JSON = "json"


def _cell(value: Any) -> Any:
    value = to_jsonable(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value, sort_keys=True)
    if value is None:
        return ""
    return value


def _columns(rows: Sequence[Dict[str, Any]]) -> List[str]:
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    return columns


def write_csv(path: PathLike, rows: Sequence[Dict[str, Any]]) -> Path:
    """Write dictionaries as CSV rows; the header is the union of their keys in order of appearance."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=_columns(rows), lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({key: _cell(value) for key, value in row.items()})
    except OSError as e:
        raise CondlabStorageError(f"cannot write report {path}: {e}") from None
    return path


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    """Read a CSV report back as a list of string dictionaries."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise CondlabStorageError(f"cannot read report {path}: {e}") from None


def write_json(path: PathLike, data: Any) -> Path:
    """Write a JSON document with sorted keys; non-finite floats become strings."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise CondlabStorageError(f"cannot write report {path}: {e}") from None
    return path


def write_table(
    out_dir: PathLike,
    name: str,
    rows: Sequence[Dict[str, Any]],
    fmt: ReportFormat = ReportFormat.CSV,
) -> Path:
    """Write a table as `<out_dir>/<name>.csv` or `<out_dir>/<name>.json`."""
    fmt = ReportFormat(fmt)
    path = Path(out_dir) / f"{name}.{fmt.value}"
    if fmt == ReportFormat.CSV:
        write_csv(path, rows)
    else:
        write_json(path, list(rows))
    logger.info("Wrote %s (%d rows).", path, len(rows))
    return path


def _version() -> str:
    try:
        return metadata.version("condlab")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(
    out_dir: PathLike,
    command: str,
    seed: Optional[int],
    files: Sequence[PathLike],
    config: Optional[Dict[str, Any]] = None,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write the run manifest next to the reports.

    Args:
        out_dir (PathLike): Output directory.
        command (str): The subcommand that produced the files.
        seed (int, optional): The master seed.
        files (Sequence[PathLike]): Emitted files; their md5 checksums are recorded.
        config (dict, optional): The effective experiment configuration.
        extra (dict, optional): Further entries, e.g. dataset normalization constants.

    Returns:
        Path: Location of the manifest.
    """
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "seed": seed,
        "version": _version(),
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config": config,
        "files": {
            Path(file).name: md5sum(file) for file in files if Path(file).exists()
        },
        **(extra or {}),
    }
    return write_json(out_dir / MANIFEST_NAME, manifest)
