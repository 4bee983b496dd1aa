# -*- encoding: utf-8 -*-
"""Runtime settings of condlab.

Every field can be overridden through an environment variable of the same
name in upper case, e.g. `MAX_THREADS=4` or `RECORD_RUNS=true`.
"""
from enum import Enum
from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings


class Environment(Enum):
    """Deployment the experiments run in."""

    LOCAL = "local"
    TEST = "test"
    PRODUCTION = "production"


class CondlabConfig(BaseSettings):
    """Process-wide settings shared by the CLI, the `Condlab` class and the run library.

    Per-experiment parameters (model, dataset, optimizer, graying) live in
    `ExperimentConfig` instead. See the
    [configuration page](../usage/config.md) for the meaning of each field.

    Attributes:
        log_file_path (str): Log destination; empty logs to stderr.
        output_dir (str): Default directory for reports, checkpoints and figures.
        record_runs (bool): Store every training run in the run library.
        library_path (str): Directory of the DuckDB run library.
        max_threads (int): Worker threads for batch graying, bound trials and
            concurrent training arms.
        batch_size (int): Chunk size of the batch executor.
        svd_tolerance (float): Relative rotation threshold of the Jacobi SVD.
        svd_max_sweeps (int): Sweep limit of the Jacobi SVD.
        max_jacobian_entries (int): Largest dense Jacobian that may be built.
        default_epsilon (float): Amplification coefficient used when a graying
            call names none.
    """

    environment: Environment = Field(default=Environment.LOCAL)
    log_level: str = Field(default="WARNING")
    log_file_path: str = Field(default="")

    # outputs
    output_dir: str = Field(default="condlab_output")
    record_runs: bool = Field(default=False)
    library_path: str = Field(default="condlab_library")

    # batch executor
    max_threads: int = Field(default=2, ge=1)
    batch_size: int = Field(default=10, ge=1)

    # numerics
    svd_tolerance: float = Field(default=1e-12, gt=0.0)
    svd_max_sweeps: int = Field(default=60, ge=1)
    max_jacobian_entries: int = Field(default=10_000_000, ge=1)
    default_epsilon: float = Field(default=0.95, gt=0.0, le=1.0)


@lru_cache()
def get_settings() -> CondlabConfig:
    """Settings read once from the environment and cached."""
    return CondlabConfig()
