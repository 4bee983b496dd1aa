# -*- encoding: utf-8 -*-
"""Tests for matrix containers and checkpoints."""

import json
import struct
import tempfile
import unittest
from pathlib import Path

import numpy as np

from condlab import io
from condlab.schema import CondlabNonFiniteError, CondlabStorageError, RngStream
from condlab.utils import md5_bytes, to_jsonable


class MatrixContainerTests(unittest.TestCase):
    """Unit tests for the binary matrix container."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_layout(self):
        """Test the byte layout of a small matrix."""
        payload = io.encode_matrix([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        self.assertEqual(payload[:8], io.MATRIX_MAGIC)
        self.assertEqual(struct.unpack("<II", payload[8:16]), (2, 3))
        self.assertEqual(len(payload), 16 + 6 * 8)
        self.assertEqual(struct.unpack("<d", payload[16 + 8 : 24 + 8])[0], 2.0)

    def test_file_round_trip(self):
        """Test that a written matrix reads back bit for bit."""
        a = RngStream(seed=1).generator().standard_normal((7, 5))
        path = self.dir / "a.cmat"
        io.write_matrix(path, a)
        np.testing.assert_array_equal(io.read_matrix(path), a)

    def test_several_matrices(self):
        """Test a file holding consecutive containers."""
        path = self.dir / "many.cmat"
        io.write_matrices(path, [np.eye(2), np.ones((1, 3))])
        matrices = io.read_matrices(path)
        self.assertEqual([m.shape for m in matrices], [(2, 2), (1, 3)])

    def test_bad_magic(self):
        """Test that a foreign file is rejected."""
        path = self.dir / "bad.cmat"
        path.write_bytes(b"NOTCONDL" + bytes(8))
        with self.assertRaises(CondlabStorageError):
            io.read_matrix(path)

    def test_truncated(self):
        """Test that a truncated payload names the offset."""
        payload = io.encode_matrix(np.ones((3, 3)))[:-5]
        with self.assertRaises(CondlabStorageError) as context:
            io.decode_matrix(payload)
        self.assertIn("truncated", str(context.exception))

    def test_trailing_bytes(self):
        """Test that trailing bytes after a single matrix are an error."""
        path = self.dir / "trailing.cmat"
        path.write_bytes(io.encode_matrix(np.eye(2)) + b"\x00")
        with self.assertRaises(CondlabStorageError):
            io.read_matrix(path)

    def test_missing_file(self):
        """Test that a missing file raises a storage error."""
        with self.assertRaises(CondlabStorageError):
            io.read_matrix(self.dir / "missing.cmat")

    def test_rejects_non_finite(self):
        """Test that non-finite matrices are not written."""
        with self.assertRaises(CondlabNonFiniteError):
            io.encode_matrix([[np.inf]])

    def test_csv(self):
        """Test the text format at full precision."""
        a = RngStream(seed=2).generator().standard_normal((4, 3))
        path = self.dir / "a.csv"
        io.write_matrix_csv(path, a)
        np.testing.assert_array_equal(io.read_matrix_csv(path), a)

    def test_csv_single_row(self):
        """Test that a one-row CSV stays two-dimensional."""
        path = self.dir / "row.csv"
        path.write_text("1,2,3\n")
        self.assertEqual(io.read_matrix_csv(path).shape, (1, 3))

    def test_csv_malformed(self):
        """Test that malformed text is a storage error."""
        path = self.dir / "bad.csv"
        path.write_text("1,2\n3,x\n")
        with self.assertRaises(CondlabStorageError):
            io.read_matrix_csv(path)


class CheckpointTests(unittest.TestCase):
    """Unit tests for model checkpoints."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / "model.cmat"
        generator = RngStream(seed=3).generator()
        self.arrays = {
            "patch_weight": generator.standard_normal((12, 8)),
            "head_bias": generator.standard_normal(4),
            "blocks.0.dw_kernel": generator.standard_normal((8, 3, 3)),
        }

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        """Test that tensors come back with their original shapes."""
        checksum = io.save_checkpoint(self.path, self.arrays, {"model": {"depth": 2}})
        arrays, manifest = io.load_checkpoint(self.path)
        self.assertEqual(set(arrays), set(self.arrays))
        for name, value in self.arrays.items():
            np.testing.assert_array_equal(arrays[name], value)
        self.assertEqual(manifest["checksum"], checksum)
        self.assertEqual(manifest["model"], {"depth": 2})
        self.assertEqual(manifest["shapes"]["blocks.0.dw_kernel"], [8, 3, 3])

    def test_deterministic_payload(self):
        """Test that the payload does not depend on insertion order."""
        reordered = dict(reversed(list(self.arrays.items())))
        self.assertEqual(io.encode_checkpoint(self.arrays), io.encode_checkpoint(reordered))
        self.assertEqual(
            io.checkpoint_checksum(self.arrays), md5_bytes(io.encode_checkpoint(self.arrays)),
        )

    def test_manifest_location(self):
        """Test that the manifest sits next to the checkpoint."""
        io.save_checkpoint(self.path, self.arrays, {})
        self.assertTrue(self.path.with_suffix(".json").exists())
        self.assertEqual(io.manifest_path(self.path), self.path.with_suffix(".json"))

    def test_checksum_mismatch(self):
        """Test that a modified payload is detected."""
        io.save_checkpoint(self.path, self.arrays, {})
        payload = bytearray(self.path.read_bytes())
        payload[-1] ^= 0xFF
        self.path.write_bytes(bytes(payload))
        with self.assertRaises(CondlabStorageError):
            io.load_checkpoint(self.path)

    def test_missing_manifest(self):
        """Test that a checkpoint without manifest cannot be loaded."""
        io.save_checkpoint(self.path, self.arrays, {})
        io.manifest_path(self.path).unlink()
        with self.assertRaises(CondlabStorageError):
            io.load_checkpoint(self.path)

    def test_bad_checkpoint_magic(self):
        """Test that a matrix container is not a checkpoint."""
        with self.assertRaises(CondlabStorageError):
            io.decode_checkpoint(io.encode_matrix(np.eye(2)))


class JsonableTests(unittest.TestCase):
    """Unit tests for the JSON conversion helper."""

    def test_non_finite(self):
        """Test that non-finite floats become strings."""
        converted = to_jsonable({"a": float("inf"), "b": [np.float64("nan"), 1.5], "c": (1, 2)})
        self.assertEqual(converted, {"a": "inf", "b": ["nan", 1.5], "c": [1, 2]})
        json.dumps(converted, allow_nan=False)

    def test_arrays(self):
        """Test that arrays become nested lists."""
        self.assertEqual(to_jsonable(np.arange(4).reshape(2, 2)), [[0, 1], [2, 3]])


if __name__ == "__main__":
    unittest.main()
