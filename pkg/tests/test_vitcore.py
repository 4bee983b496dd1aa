# -*- encoding: utf-8 -*-
"""Tests for the vision transformer forward pass."""

import math
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from condlab.schema import (
    Activation,
    AttentionKind,
    AttentionParams,
    BlockConfig,
    CondlabConfigError,
    CondlabModelError,
    CondlabShapeError,
    FfnParams,
    GrayingConfig,
    GrayingMethod,
    ModelSpec,
    RngStream,
)
from condlab.vitcore import (
    encoder_layer,
    ffn_forward,
    init_vit,
    random_attention_params,
    sab_forward,
    self_attention,
    truncated_normal,
    vit_forward,
    vit_forward_tokens,
)

SMALL = ModelSpec(layers=2, dim=8, heads=2, patch_size=2, mlp_ratio=2)


def attention_oracle(x, p):
    """Per-head, per-query loop implementation of multi-head attention."""
    n, d = x.shape
    head_dim = d // p.heads
    q, k, v = x @ p.w_q, x @ p.w_k, x @ p.w_v
    out = np.zeros((n, d))
    for h in range(p.heads):
        cols = slice(h * head_dim, (h + 1) * head_dim)
        for i in range(n):
            scores = np.array([q[i, cols] @ k[j, cols] for j in range(n)])
            if p.kind == AttentionKind.SOFTMAX:
                scores = scores / math.sqrt(head_dim)
                weights = np.exp(scores - scores.max())
                weights /= weights.sum()
            else:
                weights = scores / p.scale
            for j in range(n):
                out[i, cols] += weights[j] * v[j, cols]
    return out


class AttentionTests(unittest.TestCase):
    """Unit tests for the attention block."""

    def setUp(self):
        self.generator = RngStream(seed=1).generator()

    def test_softmax_oracle(self):
        """Test two-head softmax attention against the loop oracle."""
        p = random_attention_params(self.generator, 8, heads=2)
        x = self.generator.standard_normal((4, 8))
        np.testing.assert_allclose(self_attention(x, p), attention_oracle(x, p), atol=1e-12)

    def test_linear_oracle(self):
        """Test scaled linear attention against the loop oracle."""
        p = random_attention_params(self.generator, 6, heads=3, kind=AttentionKind.SCALED_LINEAR, scale=5.0)
        x = self.generator.standard_normal((5, 6))
        np.testing.assert_allclose(self_attention(x, p), attention_oracle(x, p), atol=1e-12)

    def test_batched(self):
        """Test that a batch gives the per-sample results."""
        p = random_attention_params(self.generator, 8, heads=4)
        batch = self.generator.standard_normal((3, 5, 8))
        result = self_attention(batch, p)
        for index in range(3):
            np.testing.assert_allclose(result[index], attention_oracle(batch[index], p), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(
        exponent=st.integers(min_value=-6, max_value=6),
        heads=st.sampled_from([1, 2, 3]),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_linear_value_homogeneity(self, exponent, heads, seed):
        """Test that scaling the value weights scales scaled linear attention by the same factor."""
        generator = RngStream(seed=seed).generator()
        p = random_attention_params(generator, 6, heads=heads, kind=AttentionKind.SCALED_LINEAR, scale=4.0)
        x = generator.standard_normal((5, 6))
        c = 2.0**exponent
        scaled = p.model_copy(update={"w_v": c * p.w_v})
        np.testing.assert_array_equal(self_attention(x, scaled), c * self_attention(x, p))
        scaled = p.model_copy(update={"w_v": -0.3 * p.w_v})
        np.testing.assert_allclose(self_attention(x, scaled), -0.3 * self_attention(x, p), rtol=1e-12, atol=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(
        kind=st.sampled_from(list(AttentionKind)),
        seed=st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_permutation_equivariance(self, kind, seed):
        """Test that permuting the token rows permutes the attention output rows."""
        generator = RngStream(seed=seed).generator()
        p = random_attention_params(generator, 8, heads=2, kind=kind)
        x = generator.standard_normal((6, 8))
        order = generator.permutation(6)
        np.testing.assert_allclose(self_attention(x[order], p), self_attention(x, p)[order], atol=1e-12)

    def test_value_identity_averages_rows(self):
        """Test that softmax weights form a convex combination of the value rows."""
        d = 4
        p = AttentionParams(
            w_q=self.generator.standard_normal((d, d)),
            w_k=self.generator.standard_normal((d, d)),
            w_v=np.eye(d),
        )
        x = np.tile(self.generator.standard_normal((1, d)), (6, 1))
        np.testing.assert_allclose(self_attention(x, p), x, atol=1e-12)

    def test_skip(self):
        """Test that the skip connection adds the block input."""
        p = random_attention_params(self.generator, 8, heads=2)
        x = self.generator.standard_normal((4, 8))
        with_skip = sab_forward(x, p, BlockConfig(skip_sab=True, prenorm=False))
        without = sab_forward(x, p, BlockConfig(skip_sab=False, prenorm=False))
        np.testing.assert_allclose(with_skip - without, x, atol=1e-12)
        np.testing.assert_allclose(without, self_attention(x, p), atol=1e-12)

    def test_dimension_mismatch(self):
        """Test that tokens of the wrong width are rejected."""
        p = random_attention_params(self.generator, 8)
        with self.assertRaises(CondlabShapeError):
            self_attention(np.ones((3, 6)), p)

    def test_head_divisibility(self):
        """Test that the dimension must be divisible by the head count."""
        with self.assertRaises(ValueError):
            random_attention_params(self.generator, 6, heads=4)

    def test_non_finite_scores(self):
        """Test that overflowing scores are reported with the layer."""
        p = AttentionParams(w_q=np.eye(2), w_k=np.eye(2), w_v=np.eye(2))
        with np.errstate(over="ignore"):
            with self.assertRaises(CondlabModelError) as context:
                self_attention(np.full((3, 2), 1e200), p, layer=3)
        self.assertIn("Layer 3", str(context.exception))


class FfnTests(unittest.TestCase):
    """Unit tests for the feedforward network."""

    def setUp(self):
        self.generator = RngStream(seed=2).generator()
        self.params = FfnParams(
            w_up=self.generator.standard_normal((4, 8)),
            w_down=self.generator.standard_normal((8, 4)),
            activation=Activation.RELU,
        )

    def test_loop_oracle(self):
        """Test the network against a token-by-token loop."""
        x = self.generator.standard_normal((3, 4))
        expected = np.zeros((3, 4))
        for i in range(3):
            hidden = np.maximum(x[i] @ self.params.w_up, 0.0)
            expected[i] = hidden @ self.params.w_down + x[i]
        result = ffn_forward(x, self.params, BlockConfig(prenorm=False))
        np.testing.assert_allclose(result, expected, atol=1e-12)

    def test_without_skip(self):
        """Test that disabling the skip removes the input term."""
        x = self.generator.standard_normal((3, 4))
        with_skip = ffn_forward(x, self.params, BlockConfig(prenorm=False))
        without = ffn_forward(x, self.params, BlockConfig(skip_ffn=False, prenorm=False))
        np.testing.assert_allclose(with_skip - without, x, atol=1e-12)

    def test_shape_mismatch(self):
        """Test that the input width must match the up projection."""
        with self.assertRaises(CondlabShapeError):
            ffn_forward(np.ones((2, 5)), self.params, BlockConfig())

    def test_invalid_params(self):
        """Test that inconsistent weights are rejected."""
        with self.assertRaises(ValueError):
            FfnParams(w_up=np.ones((4, 8)), w_down=np.ones((6, 4)))


class VitTests(unittest.TestCase):
    """Unit tests for the vision transformer model."""

    def setUp(self):
        self.model = init_vit(SMALL, (8, 8, 3), 5, RngStream(seed=3))
        self.images = RngStream(seed=4).generator().standard_normal((2, 8, 8, 3))

    def test_logits_shape(self):
        """Test the output shape for a batch and a single image."""
        self.assertEqual(vit_forward(self.images, self.model).shape, (2, 5))
        self.assertEqual(vit_forward(self.images[0], self.model).shape, (5,))

    def test_batch_consistency(self):
        """Test that batching does not change per-image logits."""
        batch = vit_forward(self.images, self.model)
        np.testing.assert_allclose(batch[1], vit_forward(self.images[1], self.model), atol=1e-12)

    def test_deterministic_init(self):
        """Test that the same stream yields the same model."""
        again = init_vit(SMALL, (8, 8, 3), 5, RngStream(seed=3))
        for name, value in self.model.arrays().items():
            np.testing.assert_array_equal(again.arrays()[name], value)

    def test_init_is_truncated(self):
        """Test that initial weights lie within two standard deviations."""
        values = truncated_normal(RngStream(seed=5).generator(), (200, 50), 0.02)
        self.assertLessEqual(np.abs(values).max(), 0.04)
        self.assertAlmostEqual(values.std(), 0.02 * 0.88, delta=0.002)

    def test_block_does_not_change_weights(self):
        """Test that the block configuration does not influence the drawn weights."""
        other = init_vit(SMALL, (8, 8, 3), 5, RngStream(seed=3), block=BlockConfig(skip_sab=False))
        np.testing.assert_array_equal(other.layers[0].attention.w_q, self.model.layers[0].attention.w_q)
        self.assertFalse(other.layers[0].block.skip_sab)

    def test_identity_graying(self):
        """Test that DCT graying with epsilon one leaves the logits unchanged."""
        config = GrayingConfig(method=GrayingMethod.DCT, epsilon=1.0)
        np.testing.assert_allclose(
            vit_forward(self.images, self.model, graying_config=config),
            vit_forward(self.images, self.model),
            atol=1e-10,
        )

    def test_graying_changes_logits(self):
        """Test that SVD graying changes the logits."""
        config = GrayingConfig(method=GrayingMethod.SVD, epsilon=0.5)
        self.assertFalse(
            np.allclose(vit_forward(self.images, self.model, graying_config=config), vit_forward(self.images, self.model)),
        )

    def test_taps(self):
        """Test the embeddings returned with the taps."""
        tokens = RngStream(seed=6).generator().standard_normal((2, 16, 12))
        logits, taps = vit_forward_tokens(tokens, self.model, with_taps=True)
        np.testing.assert_allclose(logits, vit_forward_tokens(tokens, self.model), atol=1e-12)
        self.assertEqual(len(taps), SMALL.layers)
        first = taps[0]
        self.assertEqual(first["sa"].shape, (2, 17, 8))
        np.testing.assert_allclose(first["sa_skip"] - first["sa"], first["token_in"], atol=1e-12)
        np.testing.assert_allclose(taps[1]["token_in"], first["token_out"], atol=1e-12)

    def test_taps_without_sab_skip(self):
        """Test that the taps follow the configured skips."""
        model = self.model.with_block(BlockConfig(skip_sab=False))
        x = RngStream(seed=7).generator().standard_normal((17, 8))
        out, taps = encoder_layer(x, model.layers[0], with_taps=True)
        np.testing.assert_allclose(taps["sab_out"], taps["sa"], atol=1e-12)
        np.testing.assert_allclose(out, encoder_layer(x, model.layers[0]), atol=1e-12)

    def test_arrays_round_trip(self):
        """Test that tensors can be replaced by name."""
        arrays = self.model.arrays()
        self.assertIn("layers.1.ffn.w_down", arrays)
        self.assertIn("cls", arrays)
        replaced = self.model.with_arrays({"head.bias": np.ones(5)})
        np.testing.assert_array_equal(replaced.head_bias, np.ones(5))
        np.testing.assert_array_equal(replaced.head_weight, self.model.head_weight)

    def test_without_class_token(self):
        """Test mean pooling when the model has no class token."""
        spec = SMALL.model_copy(update={"class_token": False, "positional": False})
        model = init_vit(spec, (8, 8, 3), 5, RngStream(seed=3))
        self.assertNotIn("cls", model.arrays())
        self.assertEqual(vit_forward(self.images, model).shape, (2, 5))

    def test_indivisible_image(self):
        """Test that the image must be divisible by the patch size."""
        with self.assertRaises(CondlabConfigError):
            init_vit(SMALL, (9, 8, 3), 5, RngStream(seed=3))


if __name__ == "__main__":
    unittest.main()
