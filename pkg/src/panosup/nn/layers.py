"""Distortion-aware differentiable operators for equirectangular features.

The numeric building blocks of a panoramic multi-task trunk:

* a latitude-blended token mixer that widens its receptive field toward
  the poles, where equirectangular rows are stretched;
* per-pixel feature modulation conditioned on ray direction and positional
  encodings, zero-initialized so it starts as the exact identity;
* single-head cross-attention bridging two task streams, with a truncate
  switch that cuts gradients into the opposing stream exactly;
* the weighted multi-task objective and the warmup parameter schedule.

Feature maps are (channels, height, width) tensors; token sets are
(tokens, dim).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ..errors import ConfigError, ContractError
from ..sphere import RayConvention, erp_row_latitudes, pixel_to_spherical, ray_direction
from . import autodiff as ad
from .autodiff import Tensor

NARROW_KERNEL = (3, 3)
WIDE_KERNEL = (3, 9)
CONDITION_HIDDEN = 32
PE_PER_ANGLE = 8


def latitude_blend_weight(phi):
    """Blend weight w(phi) = |sin phi|: 0 at the equator, 1 at the poles."""
    return np.abs(np.sin(np.asarray(phi, dtype=np.float64)))


@dataclass
class MixerParams:
    """Depthwise kernels of the latitude-blended mixer."""

    narrow: Tensor  # (C, 3, 3)
    wide: Tensor    # (C, 3, 9)

    @classmethod
    def identity(cls, channels: int) -> "MixerParams":
        """Both kernels pass the center pixel through unchanged."""
        narrow = np.zeros((channels,) + NARROW_KERNEL)
        wide = np.zeros((channels,) + WIDE_KERNEL)
        narrow[:, 1, 1] = 1.0
        wide[:, 1, 4] = 1.0
        return cls(narrow=Tensor(narrow, requires_grad=True),
                   wide=Tensor(wide, requires_grad=True))

    @classmethod
    def random(cls, channels: int, rng: np.random.Generator,
               scale: float = 0.5) -> "MixerParams":
        return cls(
            narrow=Tensor(rng.normal(0.0, scale, (channels,) + NARROW_KERNEL),
                          requires_grad=True),
            wide=Tensor(rng.normal(0.0, scale, (channels,) + WIDE_KERNEL),
                        requires_grad=True))


def erp_token_mixer(x: Tensor, params: MixerParams,
                    latitudes: Optional[np.ndarray] = None) -> Tensor:
    """Blend a 3x3 and a 3x9 depthwise response by row latitude.

    out_row = (1 - w) * (narrow * x)_row + w * (wide * x)_row with
    w = |sin phi|.  ``latitudes`` defaults to the raster's row-center
    latitudes; passing them explicitly supports feature maps that cover a
    latitude band rather than the full sphere.  Width must be at least 9
    so the wide kernel's circular padding never laps itself.
    """
    if x.data.ndim != 3:
        raise ContractError("erp_token_mixer wants (channels, height, width)")
    c, h, w = x.data.shape
    if w < WIDE_KERNEL[1]:
        raise ContractError(f"width must be >= {WIDE_KERNEL[1]}, got {w}")
    if latitudes is None:
        latitudes = erp_row_latitudes(h)
    latitudes = np.asarray(latitudes, dtype=np.float64)
    if latitudes.shape != (h,):
        raise ContractError(f"latitudes must be shape ({h},)")
    weight = latitude_blend_weight(latitudes)[None, :, None]
    narrow = ad.conv2d_valid(ad.erp_pad(x, 1, 1), params.narrow)
    wide = ad.conv2d_valid(ad.erp_pad(x, 1, 4), params.wide)
    return ad.add(ad.mul(Tensor(1.0 - weight), narrow),
                  ad.mul(Tensor(weight), wide))


def spherical_condition(height: int, width: int,
                        pe_per_angle: int = PE_PER_ANGLE) -> np.ndarray:
    """Per-pixel conditioning input: ray direction plus positional encoding.

    Channels are the FILM-convention unit ray (3) followed by sinusoidal
    encodings of longitude and latitude, ``pe_per_angle`` values each as
    sin/cos pairs at octave frequencies 1, 2, 4, ...  Shape is
    (height, width, 3 + 2 * pe_per_angle).
    """
    if pe_per_angle <= 0 or pe_per_angle % 2:
        raise ConfigError("pe_per_angle must be a positive even number")
    jj, ii = np.meshgrid(np.arange(width), np.arange(height))
    theta, phi = pixel_to_spherical(jj, ii, width, height)
    parts = [ray_direction(theta, phi, RayConvention.FILM)]
    for angle in (theta, phi):
        for octave in range(pe_per_angle // 2):
            freq = float(1 << octave)
            parts.append(np.stack([np.sin(freq * angle),
                                   np.cos(freq * angle)], axis=-1))
    return np.concatenate(parts, axis=-1)


@dataclass
class FilmParams:
    """Two-layer conditioning MLP producing per-pixel (gamma, beta)."""

    w1: Tensor  # (cond_dim, hidden)
    b1: Tensor  # (hidden,)
    w2: Tensor  # (hidden, 2 * channels)
    b2: Tensor  # (2 * channels,)

    @classmethod
    def zero_init(cls, cond_dim: int, channels: int,
                  hidden: int = CONDITION_HIDDEN) -> "FilmParams":
        """All-zero weights: gamma = beta = 0, modulation is the identity."""
        return cls(w1=Tensor(np.zeros((cond_dim, hidden)), requires_grad=True),
                   b1=Tensor(np.zeros(hidden), requires_grad=True),
                   w2=Tensor(np.zeros((hidden, 2 * channels)), requires_grad=True),
                   b2=Tensor(np.zeros(2 * channels), requires_grad=True))

    @classmethod
    def random(cls, cond_dim: int, channels: int, rng: np.random.Generator,
               hidden: int = CONDITION_HIDDEN, scale: float = 0.3) -> "FilmParams":
        return cls(w1=Tensor(rng.normal(0.0, scale, (cond_dim, hidden)),
                             requires_grad=True),
                   b1=Tensor(rng.normal(0.0, scale, hidden), requires_grad=True),
                   w2=Tensor(rng.normal(0.0, scale, (hidden, 2 * channels)),
                             requires_grad=True),
                   b2=Tensor(rng.normal(0.0, scale, 2 * channels),
                             requires_grad=True))


def film_modulate(features: Tensor, condition: np.ndarray,
                  params: FilmParams) -> Tensor:
    """(1 + gamma) * f + beta with (gamma, beta) from the conditioning MLP.

    ``condition`` is the (H, W, D) array from :func:`spherical_condition`
    (a constant: gradients flow through features and parameters only).
    The tanh hidden layer keeps modulation bounded early in training; with
    zero-initialized parameters the output equals the input bit for bit.
    """
    if features.data.ndim != 3:
        raise ContractError("film_modulate wants (channels, height, width)")
    c, h, w = features.data.shape
    cond = np.asarray(condition, dtype=np.float64)
    if cond.shape[:2] != (h, w):
        raise ContractError(
            f"condition spatial shape {cond.shape[:2]} != feature {(h, w)}")
    if cond.shape[2] != params.w1.data.shape[0]:
        raise ContractError("condition dim does not match params")
    if params.w2.data.shape[1] != 2 * c:
        raise ContractError("params channel count does not match features")
    flat = Tensor(cond.reshape(h * w, cond.shape[2]))
    hidden = ad.tanh(ad.add(ad.matmul(flat, params.w1), params.b1))
    gamma_beta = ad.add(ad.matmul(hidden, params.w2), params.b2)
    gamma = ad.reshape(ad.transpose(ad.narrow(gamma_beta, 1, 0, c)), (c, h, w))
    beta = ad.reshape(ad.transpose(ad.narrow(gamma_beta, 1, c, c)), (c, h, w))
    return ad.add(ad.mul(ad.add(Tensor(1.0), gamma), features), beta)


class Stream(Enum):
    """The two feature streams the bridge connects."""

    INVARIANT = "invariant"
    VARIANT = "variant"


def bridge_cross_attention(query: Tensor, features: Sequence[Tensor],
                           feature_streams: Sequence[Stream],
                           query_stream: Stream,
                           truncate: bool) -> Tensor:
    """Single-head scaled dot-product attention over pooled task features.

    The concatenated ``features`` act as both keys and values.  When
    ``truncate`` is set, every feature originating from the stream opposite
    ``query_stream`` is wrapped in stop_gradient, so the query's stream can
    read the other one without back-propagating into it.
    """
    if len(features) != len(feature_streams):
        raise ContractError("features and feature_streams must align")
    if not features:
        raise ContractError("bridge needs at least one feature set")
    if query.data.ndim != 2:
        raise ContractError("query must be (tokens, dim)")
    dim = query.data.shape[1]
    wrapped = []
    for feat, stream in zip(features, feature_streams):
        if feat.data.ndim != 2 or feat.data.shape[1] != dim:
            raise ContractError(
                f"feature dim {feat.data.shape} does not match query dim {dim}")
        if truncate and stream is not query_stream:
            feat = ad.stop_gradient(feat)
        wrapped.append(feat)
    keys = ad.concat(wrapped, axis=0)
    scores = ad.mul(ad.matmul(query, ad.transpose(keys)),
                    Tensor(1.0 / np.sqrt(dim)))
    attn = ad.softmax(scores, axis=-1)
    return ad.matmul(attn, keys)


# ---------------------------------------------------------------------------
# objective and schedule


@dataclass
class LossWeights:
    """Per-task weights of the joint objective.

    ``geo`` is reserved for a geometric consistency term that is not part
    of the objective yet; it is validated but never multiplied in.
    """

    main: dict = field(default_factory=lambda: {
        "semantic": 1.0, "depth": 1.0, "normal": 1.0})
    aux: dict = field(default_factory=lambda: {
        "gradient": 0.003, "distance": 0.003, "points": 0.003})
    geo: float = 0.0

    def __post_init__(self):
        for name, value in list(self.main.items()) + list(self.aux.items()):
            if value < 0.0:
                raise ConfigError(f"negative loss weight for {name!r}: {value}")
        if self.geo < 0.0:
            raise ConfigError(f"negative geo weight: {self.geo}")


def multitask_objective(main_losses: dict, aux_losses: dict,
                        weights: Optional[LossWeights] = None) -> Tensor:
    """Weighted sum over main and auxiliary scalar losses."""
    weights = weights if weights is not None else LossWeights()
    total = Tensor(0.0)
    for name, loss in main_losses.items():
        if name not in weights.main:
            raise ConfigError(f"no main weight configured for task {name!r}")
        total = ad.add(total, ad.mul(loss, Tensor(weights.main[name])))
    for name, loss in aux_losses.items():
        if name not in weights.aux:
            raise ConfigError(f"no aux weight configured for task {name!r}")
        total = ad.add(total, ad.mul(loss, Tensor(weights.aux[name])))
    return total


class Role(Enum):
    BACKBONE = "backbone"
    HEAD = "head"


class Phase(Enum):
    WARMUP = "warmup"
    MAIN = "main"


@dataclass
class Param:
    """A named, role-tagged parameter tensor."""

    name: str
    tensor: Tensor
    role: Role


def warmup_schedule(params: Sequence[Param], phase: Phase):
    """Trainable subset for a phase: heads only during warmup, then all."""
    if phase is Phase.WARMUP:
        return [p for p in params if p.role is Role.HEAD]
    return list(params)


def phase_for_step(step: int, warmup_steps: int) -> Phase:
    if warmup_steps < 0:
        raise ConfigError("warmup_steps must be >= 0")
    return Phase.WARMUP if step < warmup_steps else Phase.MAIN


def sgd_step(trainable: Sequence[Param], lr: float):
    """Plain gradient step on the given subset; everything else untouched."""
    for p in trainable:
        if p.tensor.grad is not None:
            p.tensor.data = p.tensor.data - lr * p.tensor.grad
