# -*- encoding: utf-8 -*-
"""Condlab core main class."""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from condlab import diagnostics, graying, linalg
from condlab.config import CondlabConfig, get_settings
from condlab.harness import experiments, training
from condlab.harness.datasets import load_dataset
from condlab.library import DuckDBRunLibrary
from condlab.schema.core import (
    BlockConfig,
    BoundTrialStats,
    ConditionReport,
    EmbeddingTap,
    GrayingConfig,
    GrayingMethod,
    ModelParams,
    RngStream,
)
from condlab.schema.exception import CondlabConfigError
from condlab.schema.experiment import (
    AblationReport,
    DatasetSpec,
    ExperimentConfig,
    ModelSpec,
    RunRecord,
    RunReport,
    SweepReport,
)
from condlab.vitcore.init import random_attention_params

condlab_logger = logging.getLogger("condlab")
log_fmt = "[%(asctime)s.%(msecs)03dZ] %(name)s %(levelname)s %(message)s"

# (suite, n, d) of the default bound verification
BOUND_SUITES = (
    ("prop1", 16, 8),
    ("prop1", 64, 32),
    ("prop2_psd", 16, 8),
    ("prop2_raw", 16, 8),
    ("ffn", 16, 8),
    ("convmixer", 8, 8),
)


class Condlab:
    """Main class that runs the conditioning experiments.

    Owns the configuration, sets up logging and, if runs are recorded, the
    run library. Every command of the command line interface is a method.
    """

    logger: logging.Logger = None
    config: CondlabConfig = None
    _library: Optional[DuckDBRunLibrary] = None

    def __init__(
        self,
        config: Optional[CondlabConfig] = None,
        logger: Optional[logging.Logger] = None,
    ) -> None:
        """Create a new condlab instance.

        Args:
            config (CondlabConfig, optional): Custom settings to apply to this instance.
            logger (logging.Logger, optional): Logger to use. Defaults to the
                "condlab" logger.
        """
        self.logger = logger or condlab_logger
        self.config = config or get_settings()
        self._setup_logging()

    def _setup_logging(self) -> None:
        level = self.config.log_level.upper()
        log_file_path = self.config.log_file_path
        if log_file_path != "":
            if (
                not os.path.isdir(os.path.dirname(os.path.abspath(log_file_path)))
                or os.path.basename(log_file_path) == ""
            ):
                logging.basicConfig(level=level, datefmt="%Y-%m-%dT%H:%M:%S", format=log_fmt)
                self.logger.error(
                    "Config var log_file_path has been set but path is not "
                    "valid or no filename specified. Logging to stderr instead.",
                )
                return
            logging.basicConfig(
                filename=log_file_path,
                level=level,
                datefmt="%Y-%m-%dT%H:%M:%S",
                format=log_fmt,
            )
            return
        logging.basicConfig(level=level, datefmt="%Y-%m-%dT%H:%M:%S", format=log_fmt)

    @property
    def library(self) -> DuckDBRunLibrary:
        """The run library, connected on first use."""
        if self._library is None:
            self.logger.info("Using DuckDBRunLibrary at %s", self.config.library_path)
            self._library = DuckDBRunLibrary(config=self.config)
        return self._library

    def verify_bounds(
        self,
        trials: int,
        seed: int,
        suites: Sequence = BOUND_SUITES,
    ) -> List[BoundTrialStats]:
        """Run the bound-verification suites.

        Every suite draws from its own stream of the seed, so adding or removing
        a suite does not change the draws of the others.

        Args:
            trials (int): Trials per suite.
            seed (int): Master seed.
            suites (Sequence): `(suite, n, d)` triples; for the ConvMixer suite
                `n` is the feature map size and `d` the channel count.

        Returns:
            List[BoundTrialStats]: One result per suite, in order.
        """
        results = []
        for stream_id, (suite, n, d) in enumerate(suites):
            stream = RngStream(seed=seed, stream_id=stream_id)
            max_threads = self.config.max_threads
            if suite == "prop1":
                stats = diagnostics.verify_prop1(n, d, trials, stream, max_threads=max_threads)
            elif suite in ("prop2_psd", "prop2_raw"):
                stats = diagnostics.verify_prop2(
                    n,
                    d,
                    trials,
                    stream,
                    psd_mode=suite == "prop2_psd",
                    max_threads=max_threads,
                )
            elif suite == "ffn":
                stats = diagnostics.verify_ffn_bound(n, d, trials, stream, max_threads=max_threads)
            elif suite == "convmixer":
                stats = diagnostics.verify_convmixer_bound(d, n, trials, stream, max_threads=max_threads)
            else:
                raise CondlabConfigError(f"unknown bound suite '{suite}'")
            self.logger.info(
                "%s (n=%d, d=%d): %.3f of %d trials satisfied.",
                stats.label,
                stats.n,
                stats.d,
                stats.fraction_satisfied,
                stats.trial_count,
            )
            results.append(stats)
        return results

    def magnitude_check(self, trials: int, seed: int, n: int = 16, d: int = 8) -> Dict[str, float]:
        """Fractions of random token matrices with extreme singular values on either side of one."""
        return diagnostics.magnitude_check(n, d, trials, RngStream(seed=seed, stream_id=len(BOUND_SUITES)))

    def graying_statistics(self, trials: int, seed: int, size: int = 32, epsilon: float = 0.9) -> Dict:
        """How often DCT graying lowers the condition number of Gaussian matrices."""
        stream = RngStream(seed=seed, stream_id=len(BOUND_SUITES) + 1)
        return graying.dct_graying_trials(size, epsilon, trials, stream)

    def profile(
        self,
        checkpoint: Union[str, Path],
        samples: int = 16,
        seed: int = 0,
        tap: EmbeddingTap = EmbeddingTap.TRANSFORM,
        dataset: Optional[DatasetSpec] = None,
    ) -> ConditionReport:
        """Condition profile of a trained vision transformer.

        The evaluation batch is the first `samples` validation images of
        `dataset`, grayed like during training, or standard normal tokens if no
        dataset is given.

        Raises:
            CondlabConfigError: If the checkpoint holds a ConvMixer.
        """
        model, manifest = training.load_model(checkpoint)
        if not isinstance(model, ModelParams):
            raise CondlabConfigError("condition profiles require a vision transformer checkpoint")
        graying_config = GrayingConfig.model_validate(manifest.get("graying", {}))
        if dataset is not None:
            handle = load_dataset(dataset, RngStream(seed=seed, stream_id=training.STREAM_DATA))
            images = handle.val_images if handle.val_labels.size else handle.train_images
            return diagnostics.layer_condition_profile(
                model,
                images[:samples],
                tap=tap,
                graying_config=graying_config,
                max_threads=self.config.max_threads,
            )
        spec = ModelSpec.model_validate(manifest["model"])
        batch = diagnostics.random_token_batch(
            spec,
            tuple(manifest["image_shape"]),
            samples,
            RngStream(seed=seed, stream_id=training.STREAM_PROFILE),
        )
        return diagnostics.layer_condition_profile(
            model,
            batch,
            tap=tap,
            max_threads=self.config.max_threads,
        )

    def train(self, config: ExperimentConfig) -> RunReport:
        """Train a single run."""
        return training.train(config)

    def ablate(self, config: ExperimentConfig) -> AblationReport:
        """Train the skip-connection ablation arms of a configuration."""
        return experiments.run_skip_ablation(config, max_threads=self.config.max_threads)

    def sweep(
        self,
        config: ExperimentConfig,
        epsilons: Sequence[float],
        methods: Sequence[GrayingMethod] = (GrayingMethod.SVD, GrayingMethod.DCT),
    ) -> SweepReport:
        """Train a token graying sweep."""
        return experiments.run_tg_sweep(
            config,
            epsilons,
            methods=methods,
            max_threads=self.config.max_threads,
        )

    def gray(self, x, config: Optional[GrayingConfig] = None) -> Dict[str, object]:
        """Gray one token matrix and report its condition number before and after."""
        grayed, rows = self.gray_samples([x], config)
        result = {key: value for key, value in rows[0].items() if key != "index"}
        result["matrix"] = grayed[0]
        return result

    def gray_samples(
        self,
        samples: Sequence,
        config: Optional[GrayingConfig] = None,
    ) -> Tuple[List[np.ndarray], List[Dict[str, object]]]:
        """Gray a batch of token matrices.

        Args:
            samples (Sequence): Token matrices of one shape.
            config (GrayingConfig, optional): Graying method and amplification coefficient.

        Returns:
            Tuple[List[np.ndarray], List[Dict]]: The grayed matrices and one report row
                per sample with its condition number before and after.
        """
        config = config or GrayingConfig(method=GrayingMethod.SVD, epsilon=self.config.default_epsilon)
        grayed = graying.gray_batch(samples, config, max_threads=self.config.max_threads)
        rows = [
            {
                "index": index,
                "method": config.method.value,
                "epsilon": config.epsilon,
                "log_condition_before": linalg.log_condition_number(x, strict=False),
                "log_condition_after": linalg.log_condition_number(y, strict=False),
            }
            for index, (x, y) in enumerate(zip(samples, grayed))
        ]
        return grayed, rows

    def jacobian(
        self,
        n: int,
        d: int,
        seeds: Sequence[int],
        epsilons: Sequence[float] = (0.6,),
        heads: int = 1,
        prenorm: bool = False,
    ) -> Dict[str, Dict]:
        """Jacobian conditioning of attention blocks with and without skip, and on grayed inputs."""
        return {
            "skip": diagnostics.jacobian_skip_comparison(n, d, seeds, heads=heads, prenorm=prenorm),
            "graying": diagnostics.jacobian_graying_comparison(
                n,
                d,
                seeds,
                epsilons=epsilons,
                heads=heads,
            ),
        }

    def jacobian_spectra(self, n: int, d: int, seed: int, heads: int = 1) -> Dict[str, np.ndarray]:
        """Jacobian singular values of one random attention block with and without skip."""
        generator = RngStream(seed=seed).generator()
        attention = random_attention_params(generator, d, heads=heads)
        x = linalg.gaussian(generator, n, d)
        return {
            "skip": diagnostics.block_jacobian_spectrum(
                attention,
                BlockConfig(skip_sab=True, prenorm=False),
                x,
            ),
            "no skip": diagnostics.block_jacobian_spectrum(
                attention,
                BlockConfig(skip_sab=False, prenorm=False),
                x,
            ),
        }

    def bench(
        self,
        sizes: Sequence[int] = (32, 64, 128, 256),
        repeats: int = 3,
        epsilon: float = 0.9,
        seed: int = 0,
    ) -> Dict[str, object]:
        """Timing trend of SVD graying against DCT graying."""
        return diagnostics.graying_cost_trend(
            sizes=sizes,
            repeats=repeats,
            epsilon=epsilon,
            stream=RngStream(seed=seed),
        )

    def record(
        self,
        report: RunReport,
        config: Optional[ExperimentConfig] = None,
        kind: str = "train",
    ) -> RunRecord:
        """Persist a run in the run library."""
        return self.library.add_run(report, config=config, kind=kind)

    # this makes all library functions callable on the condlab instance itself
    def __getattr__(self, attr):
        if attr.startswith("_"):
            raise AttributeError(attr)
        library = self.library
        if not hasattr(library, attr):
            raise AttributeError(f"Function '{attr}' unknown.")
        return getattr(library, attr)

    def close(self) -> None:
        """Disconnect from the run library."""
        if self._library is not None:
            self._library._disconnect()
            self._library = None


