# -*- encoding: utf-8 -*-
"""Tests for skip ablations and graying sweeps."""

import unittest

from condlab.harness import experiments
from condlab.schema import (
    Architecture,
    BlockConfig,
    DatasetSpec,
    ExperimentConfig,
    GrayingConfig,
    GrayingMethod,
    ModelSpec,
    OptimizerSpec,
)

CONFIG = ExperimentConfig(
    name="ablation",
    seed=5,
    model=ModelSpec(layers=1, dim=8, heads=2, patch_size=4, mlp_ratio=2),
    dataset=DatasetSpec(classes=2, per_class=5, image_size=8, channels=1, noise=0.2),
    optimizer=OptimizerSpec(learning_rate=5e-3),
    epochs=1,
    batch_size=4,
    profile_samples=2,
    save_checkpoint=False,
)


class ArmTests(unittest.TestCase):
    """Unit tests for the arm definitions."""

    def test_vit_arms(self):
        """Test the vision transformer arms and the kept normalization placement."""
        config = CONFIG.model_copy(update={"block": BlockConfig(prenorm=False)})
        arms = dict(experiments.ablation_arms(config))
        self.assertEqual(list(arms), ["full", "no_ffn_skip", "no_sab_skip"])
        self.assertFalse(arms["no_sab_skip"].skip_sab)
        self.assertTrue(arms["no_sab_skip"].skip_ffn)
        self.assertFalse(arms["no_ffn_skip"].skip_ffn)
        self.assertTrue(all(not block.prenorm for block in arms.values()))

    def test_convmixer_arms(self):
        """Test the ConvMixer arms."""
        model = ModelSpec(architecture=Architecture.CONVMIXER, layers=1, dim=4, patch_size=4, kernel_size=3)
        arms = dict(experiments.ablation_arms(CONFIG.model_copy(update={"model": model})))
        self.assertEqual(list(arms), ["skip", "no_skip"])
        self.assertFalse(arms["no_skip"].skip_sab)

    def test_sweep_arm_names(self):
        """Test the names of sweep runs."""
        self.assertEqual(experiments.sweep_arm_name(GrayingConfig()), "baseline")
        self.assertEqual(
            experiments.sweep_arm_name(GrayingConfig(method=GrayingMethod.SVD, epsilon=0.7)),
            "svd_0.7",
        )
        self.assertEqual(
            experiments.sweep_arm_name(GrayingConfig(method=GrayingMethod.DCT, epsilon=1.0)),
            "dct_1",
        )


class ExperimentRunTests(unittest.TestCase):
    """Unit tests for multi-run experiments."""

    def test_skip_ablation(self):
        """Test that the arms share their initialization and differ only in the block."""
        report = experiments.run_skip_ablation(CONFIG, max_threads=2)
        self.assertEqual([arm.arm for arm in report.arms], ["full", "no_ffn_skip", "no_sab_skip"])
        self.assertEqual(len({arm.init_checksum for arm in report.arms}), 1)
        self.assertFalse(report.arm("no_sab_skip").block.skip_sab)
        self.assertEqual(len(report.table()), 3)
        self.assertEqual(len(report.curves()), 3 * (CONFIG.epochs + 1))
        with self.assertRaises(KeyError):
            report.arm("missing")

    def test_ablation_is_deterministic(self):
        """Test that concurrency does not change the results."""
        serial = experiments.run_skip_ablation(CONFIG, max_threads=1)
        parallel = experiments.run_skip_ablation(CONFIG, max_threads=3)
        self.assertEqual(
            [arm.final_checksum for arm in serial.arms],
            [arm.final_checksum for arm in parallel.arms],
        )

    def test_failing_arm(self):
        """Test that a failing arm is recorded without aborting the others."""
        config = CONFIG.model_copy(update={"name": "failing"})
        original = experiments.train

        def train(run_config, dataset=None, arm="default", tokens=None):
            if arm == "no_ffn_skip":
                raise RuntimeError("boom")
            return original(run_config, dataset=dataset, arm=arm, tokens=tokens)

        experiments.train = train
        try:
            report = experiments.run_skip_ablation(config, max_threads=1)
        finally:
            experiments.train = original
        failed = report.arm("no_ffn_skip")
        self.assertEqual(failed.error, "RuntimeError: boom")
        self.assertEqual(failed.epochs, [])
        self.assertIsNone(report.arm("full").error)
        self.assertEqual(len(report.arm("no_sab_skip").epochs), CONFIG.epochs + 1)

    def test_graying_sweep(self):
        """Test the runs and tables of a graying sweep."""
        report = experiments.run_tg_sweep(CONFIG, [0.5], max_threads=2)
        self.assertEqual([run.arm for run in report.runs], ["baseline", "svd_0.5", "dct_0.5"])
        self.assertEqual(len({run.init_checksum for run in report.runs}), 1)
        table = report.table()
        self.assertEqual(table[1]["method"], "svd")
        self.assertEqual(table[1]["epsilon"], 0.5)
        self.assertIn("token_in", table[0])
        self.assertEqual(len(report.layer_rows()), 3 * CONFIG.model.layers)
        self.assertEqual(len(report.trace_rows()), 3 * (CONFIG.epochs + 1))

    def test_svd_graying_lowers_input_condition(self):
        """Test that SVD graying lowers the condition number of the input tokens."""
        report = experiments.run_tg_sweep(
            CONFIG.model_copy(update={"epochs": 0}),
            [0.5],
            methods=[GrayingMethod.SVD],
        )
        baseline, grayed = report.runs
        self.assertLess(grayed.input_log_condition, baseline.input_log_condition)


if __name__ == "__main__":
    unittest.main()
