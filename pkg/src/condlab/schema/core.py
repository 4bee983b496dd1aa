# -*- encoding: utf-8 -*-
# ruff: noqa: A003
"""Core schema definitions.

Contains the value types shared by the numerical modules of condlab:
random streams, SVD factors, graying and DCT configuration, the parameter
containers of the transformer and ConvMixer models as well as the reports
produced by the diagnostics.

Matrices and tensors are carried as `numpy.ndarray` (float64). Model parameter
containers also accept autodiff variables in place of arrays, which is how the
training loop binds parameters to a gradient tape.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# np.ndarray or condlab.autodiff.Var
Tensor = Any


class RngStream(BaseModel):
    """A reproducible random stream identified by a seed and a stream id.

    Identical `(seed, stream_id)` pairs yield identical draw sequences on every
    platform, since the generator is a PCG64 seeded through a `SeedSequence`.
    """

    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, lt=2**64)
    stream_id: int = Field(default=0, ge=0, lt=2**64)

    def generator(self, *substreams: int) -> np.random.Generator:
        """Create a fresh generator for this stream.

        Args:
            *substreams (int): Optional sub-stream ids, e.g. a trial index.
                Distinct sub-stream ids give statistically independent draws.

        Returns:
            np.random.Generator: A new generator positioned at the stream start.
        """
        sequence = np.random.SeedSequence(
            entropy=self.seed,
            spawn_key=(self.stream_id, *substreams),
        )
        return np.random.Generator(np.random.PCG64(sequence))

    def fork(self, stream_id: int) -> RngStream:
        """Return a stream with the same seed and another stream id."""
        return RngStream(seed=self.seed, stream_id=stream_id)


class SvdFactors(BaseModel):
    """Thin singular value decomposition `a = u @ diag(sigma) @ v.T`."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def sigma_max(self) -> float:
        """Largest singular value."""
        return float(self.sigma[0]) if self.sigma.size else 0.0

    @property
    def sigma_min(self) -> float:
        """Smallest singular value."""
        return float(self.sigma[-1]) if self.sigma.size else 0.0

    @property
    def shape(self) -> Tuple[int, int]:
        """Shape of the factorized matrix."""
        return (self.u.shape[0], self.v.shape[0])


class GrayingMethod(str, Enum):
    """Token graying methods."""

    SVD = "svd"
    DCT = "dct"
    NONE = "none"


class GrayingConfig(BaseModel):
    """Configuration of the token graying preprocessing step.

    `epsilon` is the amplification coefficient; smaller values condition the
    tokens more strongly. `rescale` multiplies SVD graying results by the
    original largest singular value, keeping the dominant component unchanged.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: GrayingMethod = GrayingMethod.NONE
    epsilon: float = Field(default=0.95, gt=0.0, le=1.0)
    rescale: bool = False


class DctBasis(BaseModel):
    """Orthonormal DCT-II basis of size N.

    `matrix[i, k]` holds `alpha[k] * cos(pi * (2i + 1) * k / (2N))`: rows are
    sample indices and columns frequency indices. The forward transform is
    therefore `matrix.T @ x`.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    size: int = Field(ge=1)
    matrix: np.ndarray
    alpha: np.ndarray


class AttentionKind(str, Enum):
    """Kinds of attention normalization."""

    SOFTMAX = "softmax"
    SCALED_LINEAR = "scaled_linear"


class Activation(str, Enum):
    """Activation functions of the feedforward network and ConvMixer."""

    GELU = "gelu"
    RELU = "relu"
    LINEAR = "linear"


class Padding(str, Enum):
    """Spatial padding of the depthwise convolution."""

    ZEROS = "zeros"
    CIRCULAR = "circular"


class AttentionParams(BaseModel):
    """Weights of a multi-head self-attention transformation."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    heads: int = Field(default=1, ge=1)
    kind: AttentionKind = AttentionKind.SOFTMAX
    scale: float = Field(default=16.0, gt=0.0)

    @model_validator(mode="after")
    def _check_shapes(self) -> AttentionParams:
        shapes = [tuple(w.shape) for w in (self.w_q, self.w_k, self.w_v)]
        if len(set(shapes)) != 1 or len(shapes[0]) != 2:  # noqa: PLR2004
            raise ValueError(f"attention weights must share a 2-D shape, got {shapes}")
        if shapes[0][1] % self.heads != 0:
            raise ValueError(
                f"model dimension {shapes[0][1]} is not divisible by {self.heads} heads",
            )
        return self

    @property
    def dim(self) -> int:
        """Model dimension d."""
        return int(self.w_q.shape[1])

    @property
    def head_dim(self) -> int:
        """Per-head dimension d / h."""
        return self.dim // self.heads


class FfnParams(BaseModel):
    """Weights of the token-wise feedforward network d -> 4d -> d."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w_up: Tensor
    w_down: Tensor
    activation: Activation = Activation.GELU

    @model_validator(mode="after")
    def _check_shapes(self) -> FfnParams:
        up, down = tuple(self.w_up.shape), tuple(self.w_down.shape)
        if len(up) != 2 or len(down) != 2 or up[1] != down[0] or up[0] != down[1]:  # noqa: PLR2004
            raise ValueError(f"inconsistent feedforward shapes {up} and {down}")
        return self


class NormParams(BaseModel):
    """Affine parameters of a layer normalization."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gamma: Tensor
    beta: Tensor


class BlockConfig(BaseModel):
    """Skip connection and normalization toggles of an encoder layer."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    skip_sab: bool = True
    skip_ffn: bool = True
    prenorm: bool = True


class LayerParams(BaseModel):
    """Parameters of one encoder layer."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    attention: AttentionParams
    ffn: FfnParams
    block: BlockConfig = Field(default_factory=BlockConfig)
    norm1: Optional[NormParams] = None
    norm2: Optional[NormParams] = None


class ModelParams(BaseModel):
    """All parameters of a vision transformer."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    patch_size: int = Field(ge=1)
    channels: int = Field(ge=1)
    layers: List[LayerParams] = Field(default_factory=list)
    patch_weight: Tensor
    patch_bias: Tensor
    class_token: Optional[Tensor] = None
    pos_embedding: Optional[Tensor] = None
    norm: NormParams
    head_weight: Tensor
    head_bias: Tensor

    @model_validator(mode="after")
    def _check_dims(self) -> ModelParams:
        dim = self.patch_weight.shape[1]
        if self.patch_weight.shape[0] != self.patch_size**2 * self.channels:
            raise ValueError(
                f"patch projection expects {self.patch_size**2 * self.channels} inputs, "
                f"got {self.patch_weight.shape[0]}",
            )
        for index, layer in enumerate(self.layers):
            if layer.attention.dim != dim or layer.ffn.w_up.shape[0] != dim:
                raise ValueError(f"layer {index} does not match model dimension {dim}")
        if self.head_weight.shape[0] != dim:
            raise ValueError(f"head expects dimension {self.head_weight.shape[0]}")
        return self

    @property
    def dim(self) -> int:
        """Model dimension d."""
        return int(self.patch_weight.shape[1])

    @property
    def classes(self) -> int:
        """Number of output classes."""
        return int(self.head_weight.shape[1])

    def arrays(self) -> Dict[str, Tensor]:
        """Return all learnable tensors keyed by a stable dotted name."""
        named: Dict[str, Tensor] = {
            "patch.weight": self.patch_weight,
            "patch.bias": self.patch_bias,
        }
        if self.class_token is not None:
            named["cls"] = self.class_token
        if self.pos_embedding is not None:
            named["pos"] = self.pos_embedding
        for index, layer in enumerate(self.layers):
            prefix = f"layers.{index}"
            named[f"{prefix}.attn.w_q"] = layer.attention.w_q
            named[f"{prefix}.attn.w_k"] = layer.attention.w_k
            named[f"{prefix}.attn.w_v"] = layer.attention.w_v
            named[f"{prefix}.ffn.w_up"] = layer.ffn.w_up
            named[f"{prefix}.ffn.w_down"] = layer.ffn.w_down
            for norm_name in ("norm1", "norm2"):
                norm = getattr(layer, norm_name)
                if norm is not None:
                    named[f"{prefix}.{norm_name}.gamma"] = norm.gamma
                    named[f"{prefix}.{norm_name}.beta"] = norm.beta
        named["norm.gamma"] = self.norm.gamma
        named["norm.beta"] = self.norm.beta
        named["head.weight"] = self.head_weight
        named["head.bias"] = self.head_bias
        return named

    def with_arrays(self, arrays: Dict[str, Tensor]) -> ModelParams:
        """Return a copy whose tensors are replaced by the given named tensors.

        Names missing from `arrays` keep their current value.
        """

        def pick(name: str, current: Tensor) -> Tensor:
            return arrays.get(name, current)

        def norm_copy(prefix: str, norm: Optional[NormParams]) -> Optional[NormParams]:
            if norm is None:
                return None
            return NormParams(
                gamma=pick(f"{prefix}.gamma", norm.gamma),
                beta=pick(f"{prefix}.beta", norm.beta),
            )

        layers = []
        for index, layer in enumerate(self.layers):
            prefix = f"layers.{index}"
            layers.append(
                LayerParams(
                    attention=layer.attention.model_copy(
                        update={
                            "w_q": pick(f"{prefix}.attn.w_q", layer.attention.w_q),
                            "w_k": pick(f"{prefix}.attn.w_k", layer.attention.w_k),
                            "w_v": pick(f"{prefix}.attn.w_v", layer.attention.w_v),
                        },
                    ),
                    ffn=layer.ffn.model_copy(
                        update={
                            "w_up": pick(f"{prefix}.ffn.w_up", layer.ffn.w_up),
                            "w_down": pick(f"{prefix}.ffn.w_down", layer.ffn.w_down),
                        },
                    ),
                    block=layer.block,
                    norm1=norm_copy(f"{prefix}.norm1", layer.norm1),
                    norm2=norm_copy(f"{prefix}.norm2", layer.norm2),
                ),
            )
        return self.model_copy(
            update={
                "layers": layers,
                "patch_weight": pick("patch.weight", self.patch_weight),
                "patch_bias": pick("patch.bias", self.patch_bias),
                "class_token": (
                    pick("cls", self.class_token)
                    if self.class_token is not None
                    else None
                ),
                "pos_embedding": (
                    pick("pos", self.pos_embedding)
                    if self.pos_embedding is not None
                    else None
                ),
                "norm": norm_copy("norm", self.norm),
                "head_weight": pick("head.weight", self.head_weight),
                "head_bias": pick("head.bias", self.head_bias),
            },
        )

    def with_block(self, block: BlockConfig) -> ModelParams:
        """Return a copy in which every layer uses the given block configuration."""
        return self.model_copy(
            update={
                "layers": [
                    layer.model_copy(update={"block": block}) for layer in self.layers
                ],
            },
        )


class BatchNormParams(BaseModel):
    """Affine parameters and running statistics of a 2-D batch normalization."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = Field(default=0.1, gt=0.0, le=1.0)
    eps: float = Field(default=1e-5, gt=0.0)

    @model_validator(mode="after")
    def _check_variance(self) -> BatchNormParams:
        if np.any(np.asarray(self.running_var) < 0):
            raise ValueError("batch norm running variance must be non-negative")
        return self


class ConvMixerParams(BaseModel):
    """Parameters of one ConvMixer block.

    The depthwise kernel has shape `(channels, k, k)` and is applied per
    channel, the pointwise weight has shape `(channels, channels)`.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dw_kernel: Tensor
    dw_bias: Tensor
    pw_weight: Tensor
    pw_bias: Tensor
    bn1: Optional[BatchNormParams] = None
    bn2: Optional[BatchNormParams] = None
    activation: Activation = Activation.GELU
    padding: Padding = Padding.ZEROS

    @model_validator(mode="after")
    def _check_shapes(self) -> ConvMixerParams:
        channels, kh, kw = self.dw_kernel.shape
        if kh != kw or kh % 2 == 0:
            raise ValueError(f"depthwise kernel must be square with odd size, got {kh}x{kw}")
        if tuple(self.pw_weight.shape) != (channels, channels):
            raise ValueError(
                f"pointwise weight must have shape {(channels, channels)}, "
                f"got {tuple(self.pw_weight.shape)}",
            )
        return self

    @property
    def channels(self) -> int:
        """Number of feature channels h."""
        return int(self.dw_kernel.shape[0])


class ConvMixerModelParams(BaseModel):
    """All parameters of a ConvMixer classifier."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    patch_size: int = Field(ge=1)
    channels: int = Field(ge=1)
    grid: Tuple[int, int]
    skip: bool = True
    blocks: List[ConvMixerParams] = Field(default_factory=list)
    patch_weight: Tensor
    patch_bias: Tensor
    bn0: Optional[BatchNormParams] = None
    head_weight: Tensor
    head_bias: Tensor

    @property
    def dim(self) -> int:
        """Number of feature channels h."""
        return int(self.patch_weight.shape[1])

    @property
    def classes(self) -> int:
        """Number of output classes."""
        return int(self.head_weight.shape[1])

    def batchnorms(self) -> Iterator[Tuple[str, BatchNormParams]]:
        """Yield every batch normalization with its dotted name prefix."""
        if self.bn0 is not None:
            yield "bn0", self.bn0
        for index, block in enumerate(self.blocks):
            for name in ("bn1", "bn2"):
                bn = getattr(block, name)
                if bn is not None:
                    yield f"blocks.{index}.{name}", bn

    def arrays(self) -> Dict[str, Tensor]:
        """Return all learnable tensors keyed by a stable dotted name."""
        named: Dict[str, Tensor] = {
            "patch.weight": self.patch_weight,
            "patch.bias": self.patch_bias,
        }
        for index, block in enumerate(self.blocks):
            prefix = f"blocks.{index}"
            named[f"{prefix}.dw.kernel"] = block.dw_kernel
            named[f"{prefix}.dw.bias"] = block.dw_bias
            named[f"{prefix}.pw.weight"] = block.pw_weight
            named[f"{prefix}.pw.bias"] = block.pw_bias
        for prefix, bn in self.batchnorms():
            named[f"{prefix}.gamma"] = bn.gamma
            named[f"{prefix}.beta"] = bn.beta
        named["head.weight"] = self.head_weight
        named["head.bias"] = self.head_bias
        return named

    def buffers(self) -> Dict[str, np.ndarray]:
        """Return the batch norm running statistics keyed by dotted name."""
        named: Dict[str, np.ndarray] = {}
        for prefix, bn in self.batchnorms():
            named[f"{prefix}.running_mean"] = bn.running_mean
            named[f"{prefix}.running_var"] = bn.running_var
        return named

    def with_arrays(self, arrays: Dict[str, Tensor]) -> ConvMixerModelParams:
        """Return a copy with tensors and running statistics replaced by name."""

        def pick(name: str, current: Tensor) -> Tensor:
            return arrays.get(name, current)

        def bn_copy(prefix: str, bn: Optional[BatchNormParams]) -> Optional[BatchNormParams]:
            if bn is None:
                return None
            return bn.model_copy(
                update={
                    "gamma": pick(f"{prefix}.gamma", bn.gamma),
                    "beta": pick(f"{prefix}.beta", bn.beta),
                    "running_mean": pick(f"{prefix}.running_mean", bn.running_mean),
                    "running_var": pick(f"{prefix}.running_var", bn.running_var),
                },
            )

        blocks = []
        for index, block in enumerate(self.blocks):
            prefix = f"blocks.{index}"
            blocks.append(
                block.model_copy(
                    update={
                        "dw_kernel": pick(f"{prefix}.dw.kernel", block.dw_kernel),
                        "dw_bias": pick(f"{prefix}.dw.bias", block.dw_bias),
                        "pw_weight": pick(f"{prefix}.pw.weight", block.pw_weight),
                        "pw_bias": pick(f"{prefix}.pw.bias", block.pw_bias),
                        "bn1": bn_copy(f"{prefix}.bn1", block.bn1),
                        "bn2": bn_copy(f"{prefix}.bn2", block.bn2),
                    },
                ),
            )
        return self.model_copy(
            update={
                "blocks": blocks,
                "patch_weight": pick("patch.weight", self.patch_weight),
                "patch_bias": pick("patch.bias", self.patch_bias),
                "bn0": bn_copy("bn0", self.bn0),
                "head_weight": pick("head.weight", self.head_weight),
                "head_bias": pick("head.bias", self.head_bias),
            },
        )


class EmbeddingTap(str, Enum):
    """Where layer embeddings are tapped for condition profiling.

    `transform` measures the embeddings as produced by the transformation and
    skip connection. `normalized` first rescales every token to unit root mean
    square, removing the per-token scale the next normalization would remove.
    Tokens are not centered: centered rows all lie in the complement of the
    ones vector, so the matrix would be rank deficient.
    """

    TRANSFORM = "transform"
    NORMALIZED = "normalized"


class LayerConditionRecord(BaseModel):
    """Batch-mean natural-log condition numbers of one encoder layer."""

    model_config = ConfigDict(frozen=True)

    layer: int = Field(ge=0)
    sa_no_skip: float
    sa_skip: float
    mlp_no_skip: float
    mlp_skip: float
    token_in: float
    token_out: float


class ConditionReport(BaseModel):
    """Per-layer condition profile of a model on an evaluation batch."""

    model_config = ConfigDict(frozen=True)

    tap: EmbeddingTap = EmbeddingTap.TRANSFORM
    samples: int = Field(ge=1)
    records: List[LayerConditionRecord] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_order(self) -> ConditionReport:
        layers = [record.layer for record in self.records]
        if layers != sorted(layers):
            raise ValueError("condition records must be sorted by layer")
        return self

    def rows(self) -> List[Dict[str, Any]]:
        """One dictionary per layer, suitable for CSV emission."""
        return [record.model_dump() for record in self.records]

    def mean(self, field: str) -> float:
        """Average of a record field over all layers."""
        if not self.records:
            return math.nan
        return float(np.mean([getattr(record, field) for record in self.records]))


class BoundTrial(BaseModel):
    """Measurements of a single bound-verification trial."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    lhs: float
    rhs: float
    sigma_max: float
    sigma_min: float
    satisfied: bool
    c_values: Dict[str, float] = Field(default_factory=dict)
    extras: Dict[str, float] = Field(default_factory=dict)
    flagged: bool = False

    @property
    def log_ratio(self) -> float:
        """Natural-log ratio ln(lhs / rhs)."""
        if self.lhs <= 0 or self.rhs <= 0 or math.isinf(self.rhs):
            return -math.inf
        if math.isinf(self.lhs):
            return math.inf
        return math.log(self.lhs) - math.log(self.rhs)


class BoundTrialStats(BaseModel):
    """Aggregated results of a bound-verification suite."""

    model_config = ConfigDict(frozen=True)

    label: str
    n: int
    d: int
    seed: int
    trial_count: int = Field(ge=0)
    trials: List[BoundTrial] = Field(default_factory=list)
    redraws: int = Field(default=0, ge=0)
    flagged: int = Field(default=0, ge=0)
    fraction_satisfied: float = Field(ge=0.0, le=1.0)
    median_ratio: float
    median_log_ratio: float
    thresholds: Dict[str, float] = Field(default_factory=dict)

    @classmethod
    def from_trials(
        cls,
        label: str,
        n: int,
        d: int,
        seed: int,
        trials: List[BoundTrial],
        redraws: int = 0,
        thresholds: Optional[Dict[str, float]] = None,
    ) -> BoundTrialStats:
        """Aggregate a list of trials.

        Flagged trials count towards the satisfaction fraction but are excluded
        from the ratio statistics.
        """
        trials = sorted(trials, key=lambda t: t.index)
        included = [t for t in trials if not t.flagged]
        log_ratios = [t.log_ratio for t in included]
        median_log_ratio = float(np.median(log_ratios)) if log_ratios else math.nan
        return cls(
            label=label,
            n=n,
            d=d,
            seed=seed,
            trial_count=len(trials),
            trials=trials,
            redraws=redraws,
            flagged=len(trials) - len(included),
            fraction_satisfied=(
                sum(t.satisfied for t in trials) / len(trials) if trials else 0.0
            ),
            median_ratio=(
                math.exp(median_log_ratio)
                if math.isfinite(median_log_ratio)
                else median_log_ratio
            ),
            median_log_ratio=median_log_ratio,
            thresholds=thresholds or {},
        )

    def rows(self) -> List[Dict[str, Any]]:
        """One dictionary per trial, suitable for CSV emission."""
        rows = []
        for trial in self.trials:
            row = {
                "trial": trial.index,
                "lhs": trial.lhs,
                "rhs": trial.rhs,
                "sigma_max": trial.sigma_max,
                "sigma_min": trial.sigma_min,
                "satisfied": trial.satisfied,
                "flagged": trial.flagged,
            }
            row.update({f"c_{key}": value for key, value in trial.c_values.items()})
            row.update(trial.extras)
            rows.append(row)
        return rows

    def summary(self) -> Dict[str, Any]:
        """Aggregate values without the per-trial records."""
        summary = self.model_dump(exclude={"trials"})
        c_products = [t.c_values.get("product") for t in self.trials if "product" in t.c_values]
        if c_products:
            summary["c_median"] = float(np.median(c_products))
            summary["c_quantiles"] = [
                float(q) for q in np.quantile(c_products, [0.1, 0.5, 0.9])
            ]
        return summary
