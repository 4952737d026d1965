"""Typed raster containers: panoramas, perspective patches, reprojected labels.

The containers validate their payloads on construction so that contract
violations surface at the boundary where the bad data entered, not three
operations later inside a sampler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ContractError, DataError
from .sphere import CameraPose

# Unit-length tolerance for normal payloads on valid pixels.
NORMAL_UNIT_TOL = 1e-3


class ChannelKind(Enum):
    RGB = "rgb"
    DEPTH = "depth"          # radial distance in meters on a panorama
    NORMAL = "normal"        # unit vectors; all-zero marks invalid
    SEMANTIC = "semantic"    # integer class indices
    POINT_MAP = "point_map"  # metric xyz in meters
    SCALAR = "scalar"        # generic single-channel float payload


class PatchTask(Enum):
    SEMANTIC = "semantic"
    DEPTH = "depth"          # z-depth along the optical axis on patches
    NORMAL = "normal"


TASK_TO_KIND = {
    PatchTask.SEMANTIC: ChannelKind.SEMANTIC,
    PatchTask.DEPTH: ChannelKind.DEPTH,
    PatchTask.NORMAL: ChannelKind.NORMAL,
}

_KIND_CHANNELS = {
    ChannelKind.RGB: 3,
    ChannelKind.DEPTH: 1,
    ChannelKind.NORMAL: 3,
    ChannelKind.SEMANTIC: 1,
    ChannelKind.POINT_MAP: 3,
    ChannelKind.SCALAR: 1,
}


def _check_payload(data: np.ndarray, kind: ChannelKind, what: str):
    channels = _KIND_CHANNELS[kind]
    if channels == 1:
        if data.ndim != 2:
            raise ContractError(f"{what}: {kind.value} payload must be 2-D, "
                                f"got shape {data.shape}")
    else:
        if data.ndim != 3 or data.shape[2] != channels:
            raise ContractError(f"{what}: {kind.value} payload must be "
                                f"(H, W, {channels}), got shape {data.shape}")
    if kind is ChannelKind.RGB and data.dtype != np.uint8:
        raise ContractError(f"{what}: rgb payload must be uint8")
    if kind is ChannelKind.SEMANTIC:
        if not np.issubdtype(data.dtype, np.integer):
            raise ContractError(f"{what}: semantic payload must be integer")
        if data.size and data.min() < 0:
            raise DataError(f"{what}: negative class index")
    if kind in (ChannelKind.DEPTH, ChannelKind.NORMAL, ChannelKind.POINT_MAP,
                ChannelKind.SCALAR):
        if not np.issubdtype(data.dtype, np.floating):
            raise ContractError(f"{what}: {kind.value} payload must be float")


def payload_valid_mask(data: np.ndarray, kind: ChannelKind) -> np.ndarray:
    """Which pixels carry meaningful payload, by kind.

    Depth: positive and finite.  Normal: non-degenerate length (all-zero is
    the invalid marker).  Point map: all components finite.  Everything
    else: all pixels.
    """
    if kind is ChannelKind.DEPTH:
        return np.isfinite(data) & (data > 0.0)
    if kind is ChannelKind.NORMAL:
        norm = np.linalg.norm(data, axis=-1)
        return np.isfinite(norm) & (norm > 0.5)
    if kind is ChannelKind.POINT_MAP:
        return np.isfinite(data).all(axis=-1)
    return np.ones(data.shape[:2], dtype=bool)


def _check_normals_unit(data: np.ndarray, what: str):
    valid = payload_valid_mask(data, ChannelKind.NORMAL)
    if valid.any():
        norms = np.linalg.norm(data[valid], axis=-1)
        worst = np.abs(norms - 1.0).max()
        if worst > NORMAL_UNIT_TOL:
            raise DataError(f"{what}: normals deviate from unit length "
                            f"by {worst:.2e} (> {NORMAL_UNIT_TOL})")


@dataclass
class ErpImage:
    """An equirectangular raster (width == 2 * height) of one channel kind."""

    data: np.ndarray
    kind: ChannelKind

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data)
        _check_payload(self.data, self.kind, "ErpImage")
        h, w = self.data.shape[:2]
        if w != 2 * h:
            raise ContractError(f"ErpImage must be 2:1, got {w}x{h}")
        if self.kind is ChannelKind.NORMAL:
            _check_normals_unit(self.data, "ErpImage")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        return payload_valid_mask(self.data, self.kind)


@dataclass
class PatchSample:
    """A perspective patch of task payload extracted at (or destined for) a pose."""

    task: PatchTask
    pose: CameraPose
    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data)
        kind = TASK_TO_KIND[self.task]
        _check_payload(self.data, kind, "PatchSample")
        h, w = self.data.shape[:2]
        if (h, w) != (self.pose.height, self.pose.width):
            raise ContractError(
                f"PatchSample payload {w}x{h} does not match pose "
                f"{self.pose.width}x{self.pose.height}")
        if self.task is PatchTask.NORMAL:
            _check_normals_unit(self.data, "PatchSample")


@dataclass
class ErpPatchLabel:
    """One patch reprojected back onto the panorama with its validity mask."""

    task: PatchTask
    pose: CameraPose
    data: np.ndarray
    valid: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data)
        self.valid = np.ascontiguousarray(self.valid).astype(bool)
        kind = TASK_TO_KIND[self.task]
        _check_payload(self.data, kind, "ErpPatchLabel")
        h, w = self.data.shape[:2]
        if w != 2 * h:
            raise ContractError(f"ErpPatchLabel must be 2:1, got {w}x{h}")
        if self.valid.shape != (h, w):
            raise ContractError("valid mask shape does not match payload")
        if self.valid.any():
            region = self.data[self.valid]
            if np.issubdtype(region.dtype, np.floating) and \
                    not np.isfinite(region).all():
                raise DataError("ErpPatchLabel: non-finite payload on valid pixels")
