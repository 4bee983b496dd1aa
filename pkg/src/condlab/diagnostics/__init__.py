# -*- encoding: utf-8 -*-
# ruff: noqa: F401
"""Quantitative checks of the conditioning claims."""

from .bounds import (
    convmixer_trial,
    ffn_trial,
    magnitude_check,
    prop1_trial,
    prop2_trial,
    verify_convmixer_bound,
    verify_ffn_bound,
    verify_prop1,
    verify_prop2,
)
from .cost import graying_cost_trend
from .jacobian import (
    block_jacobian_spectrum,
    jacobian_graying_comparison,
    jacobian_skip_comparison,
    sab_jacobian_spectrum,
    spectrum_log_condition,
)
from .profile import (
    attention_kind_profile,
    condition_contrast,
    embedding_log_condition,
    layer_condition_profile,
    profile_tokens,
    random_token_batch,
)
