"""Differentiable operators for panoramic feature maps."""

from . import autodiff
from .autodiff import (Tensor, absolute, add, concat, conv2d_valid,
                       cross_entropy, erp_pad, l1_loss, masked_mean, matmul,
                       mul, narrow, reshape, softmax, stop_gradient, tanh,
                       transpose)
from .gradcheck import CheckResult, max_relative_error, numeric_gradient, run_checks
from .layers import (CONDITION_HIDDEN, FilmParams, LossWeights, MixerParams,
                     Param, Phase, Role, Stream, bridge_cross_attention,
                     erp_token_mixer, film_modulate, latitude_blend_weight,
                     multitask_objective, phase_for_step, sgd_step,
                     spherical_condition, warmup_schedule)

__all__ = [
    "Tensor", "absolute", "add", "concat", "conv2d_valid", "cross_entropy",
    "erp_pad", "l1_loss", "masked_mean", "matmul", "mul", "narrow",
    "reshape", "softmax", "stop_gradient", "tanh", "transpose",
    "CheckResult", "max_relative_error", "numeric_gradient", "run_checks",
    "CONDITION_HIDDEN", "FilmParams", "LossWeights", "MixerParams", "Param",
    "Phase", "Role", "Stream", "bridge_cross_attention", "erp_token_mixer",
    "film_modulate", "latitude_blend_weight", "multitask_objective",
    "phase_for_step", "sgd_step", "spherical_condition", "warmup_schedule",
    "autodiff",
]
