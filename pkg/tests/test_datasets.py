# -*- encoding: utf-8 -*-
"""Tests for dataset ingestion and generation."""

import tempfile
import unittest
from pathlib import Path

import numpy as np

from condlab.harness.datasets import (
    CIFAR10_MEAN,
    CIFAR10_RECORD_BYTES,
    CIFAR10_STD,
    load_cifar10,
    load_dataset,
    nearest_mean_accuracy,
    parse_cifar10_records,
    read_cifar10_file,
    synth_dataset,
)
from condlab.schema import (
    CondlabDatasetError,
    DatasetSource,
    DatasetSpec,
    RngStream,
)


def cifar_record(label, red=0, green=0, blue=0):
    """One binary record with constant color planes."""
    planes = [np.full(1024, value, dtype=np.uint8) for value in (red, green, blue)]
    return bytes([label]) + b"".join(plane.tobytes() for plane in planes)


class CifarParserTests(unittest.TestCase):
    """Unit tests for the CIFAR-10 binary parser."""

    def test_layout(self):
        """Test the label byte and the planar channel order."""
        payload = cifar_record(3, red=10, green=20, blue=30) + cifar_record(7, red=1)
        images, labels = parse_cifar10_records(payload)
        self.assertEqual(images.shape, (2, 32, 32, 3))
        self.assertEqual(images.dtype, np.uint8)
        np.testing.assert_array_equal(labels, [3, 7])
        np.testing.assert_array_equal(images[0, 5, 9], [10, 20, 30])
        np.testing.assert_array_equal(images[1, 0, 0], [1, 0, 0])

    def test_row_major_pixels(self):
        """Test that pixel bytes are read row by row."""
        record = bytearray(cifar_record(0))
        record[1 + 1 * 32 + 2] = 99
        images, _ = parse_cifar10_records(bytes(record))
        self.assertEqual(images[0, 1, 2, 0], 99)
        self.assertEqual(images[0, 2, 1, 0], 0)

    def test_truncated_stream(self):
        """Test that a truncated stream names the offset of the partial record."""
        payload = cifar_record(1) * 2 + bytes(5)
        with self.assertRaises(CondlabDatasetError) as context:
            parse_cifar10_records(payload)
        self.assertEqual(context.exception.offset, 2 * CIFAR10_RECORD_BYTES)
        self.assertIn("residue of 5", str(context.exception))

    def test_invalid_label(self):
        """Test that a label outside the class range names its record."""
        payload = cifar_record(1) + cifar_record(10)
        with self.assertRaises(CondlabDatasetError) as context:
            parse_cifar10_records(payload, base_offset=100)
        self.assertEqual(context.exception.offset, 100 + CIFAR10_RECORD_BYTES)

    def test_empty_stream(self):
        """Test that an empty file holds no records."""
        images, labels = parse_cifar10_records(b"")
        self.assertEqual(images.shape, (0, 32, 32, 3))
        self.assertEqual(labels.size, 0)


class CifarLoaderTests(unittest.TestCase):
    """Unit tests for loading CIFAR-10 files from disk."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_directory(self):
        """Test a directory with training batches and a test batch."""
        (self.dir / "data_batch_1.bin").write_bytes(cifar_record(0) * 3)
        (self.dir / "data_batch_2.bin").write_bytes(cifar_record(1) * 2)
        (self.dir / "test_batch.bin").write_bytes(cifar_record(2, red=255))
        dataset = load_cifar10(self.dir)
        self.assertEqual(dataset.split_sizes, {"train": 5, "val": 1})
        np.testing.assert_array_equal(dataset.train_labels, [0, 0, 0, 1, 1])
        expected = (1.0 - CIFAR10_MEAN[0]) / CIFAR10_STD[0]
        self.assertAlmostEqual(dataset.val_images[0, 0, 0, 0], expected)
        self.assertAlmostEqual(dataset.train_images[0, 0, 0, 2], -CIFAR10_MEAN[2] / CIFAR10_STD[2])
        self.assertEqual(dataset.normalization["mean"], list(CIFAR10_MEAN))

    def test_single_file_hold_out(self):
        """Test the seeded hold-out split of a single batch file."""
        path = self.dir / "batch.bin"
        path.write_bytes(b"".join(cifar_record(k % 10) for k in range(10)))
        first = load_cifar10(path, val_fraction=0.3, stream=RngStream(seed=4))
        again = load_cifar10(path, val_fraction=0.3, stream=RngStream(seed=4))
        self.assertEqual(first.split_sizes, {"train": 7, "val": 3})
        np.testing.assert_array_equal(first.val_labels, again.val_labels)
        labels = np.sort(np.concatenate([first.train_labels, first.val_labels]))
        np.testing.assert_array_equal(labels, np.arange(10))

    def test_limit(self):
        """Test that the record limit applies per split."""
        path = self.dir / "batch.bin"
        path.write_bytes(cifar_record(0) * 10)
        dataset = load_cifar10(path, val_fraction=0.5, limit=2)
        self.assertEqual(dataset.split_sizes, {"train": 2, "val": 2})

    def test_missing_batches(self):
        """Test that a directory without training batches is rejected."""
        with self.assertRaises(CondlabDatasetError):
            load_cifar10(self.dir)

    def test_missing_file(self):
        """Test that an unreadable file is a dataset error."""
        with self.assertRaises(CondlabDatasetError):
            read_cifar10_file(self.dir / "missing.bin")

    def test_error_names_file(self):
        """Test that parse errors carry the file name."""
        path = self.dir / "data_batch_1.bin"
        path.write_bytes(bytes(10))
        with self.assertRaises(CondlabDatasetError) as context:
            load_cifar10(self.dir)
        self.assertIn("data_batch_1.bin", str(context.exception))
        self.assertEqual(context.exception.offset, 0)


class SyntheticDatasetTests(unittest.TestCase):
    """Unit tests for the synthetic classification task."""

    def test_shapes_and_split(self):
        """Test split sizes and shapes."""
        dataset = synth_dataset(4, 10, (8, 8, 3), 0.5, RngStream(seed=1), val_fraction=0.25)
        self.assertEqual(dataset.source, DatasetSource.SYNTHETIC)
        self.assertEqual(dataset.split_sizes, {"train": 30, "val": 10})
        self.assertEqual(dataset.train_images.shape, (30, 8, 8, 3))
        self.assertEqual(dataset.class_means.shape, (4, 8, 8, 3))

    def test_deterministic(self):
        """Test that a fixed stream yields a byte-identical dataset."""
        first = synth_dataset(3, 5, (4, 4, 1), 0.3, RngStream(seed=2))
        again = synth_dataset(3, 5, (4, 4, 1), 0.3, RngStream(seed=2))
        self.assertEqual(first.train_images.tobytes(), again.train_images.tobytes())
        np.testing.assert_array_equal(first.val_labels, again.val_labels)
        other = synth_dataset(3, 5, (4, 4, 1), 0.3, RngStream(seed=3))
        self.assertFalse(np.array_equal(first.train_images, other.train_images))

    def test_class_means_unit_rms(self):
        """Test that the class patterns have unit root mean square."""
        dataset = synth_dataset(5, 2, (8, 8, 3), 0.0, RngStream(seed=4))
        rms = np.sqrt(np.mean(dataset.class_means**2, axis=(1, 2, 3)))
        np.testing.assert_allclose(rms, np.ones(5), atol=1e-12)

    def test_noiseless_samples_are_means(self):
        """Test that without noise every sample equals its class mean."""
        dataset = synth_dataset(3, 4, (4, 4, 2), 0.0, RngStream(seed=5))
        np.testing.assert_allclose(dataset.train_images, dataset.class_means[dataset.train_labels])
        self.assertEqual(nearest_mean_accuracy(dataset), 1.0)

    def test_nearest_mean_baseline(self):
        """Test that moderate noise leaves the task learnable but not trivial."""
        easy = synth_dataset(4, 50, (8, 8, 3), 0.2, RngStream(seed=6))
        hard = synth_dataset(4, 50, (8, 8, 3), 20.0, RngStream(seed=6))
        self.assertGreater(nearest_mean_accuracy(easy), 0.9)
        self.assertLess(nearest_mean_accuracy(hard), nearest_mean_accuracy(easy))

    def test_nearest_mean_empty_validation(self):
        """Test that the baseline of an empty validation split is NaN."""
        dataset = synth_dataset(2, 3, (4, 4, 1), 0.1, RngStream(seed=7), val_fraction=0.01)
        self.assertEqual(dataset.split_sizes["val"], 0)
        self.assertTrue(np.isnan(nearest_mean_accuracy(dataset)))

    def test_load_dataset(self):
        """Test loading configured datasets including the limit."""
        spec = DatasetSpec(classes=3, per_class=10, image_size=8, channels=1, limit=4)
        dataset = load_dataset(spec, RngStream(seed=8))
        self.assertEqual(dataset.image_shape, (8, 8, 1))
        self.assertEqual(dataset.split_sizes, {"train": 4, "val": 4})

    def test_invalid_labels_rejected(self):
        """Test that dataset handles validate their labels."""
        dataset = synth_dataset(2, 3, (4, 4, 1), 0.1, RngStream(seed=9))
        with self.assertRaises(ValueError):
            type(dataset)(
                source=dataset.source,
                image_shape=dataset.image_shape,
                classes=2,
                train_images=dataset.train_images,
                train_labels=dataset.train_labels + 5,
                val_images=dataset.val_images,
                val_labels=dataset.val_labels,
            )


if __name__ == "__main__":
    unittest.main()
