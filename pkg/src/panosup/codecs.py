"""Bit-exact raster encodings and PNG file I/O.

Every payload crosses the filesystem as PNG with a fixed integer encoding:

* rgb       8-bit, 3 channels
* semantic  8-bit class indices (0..255)
* depth     16-bit unsigned millimeters; 0 marks invalid
* normal    16-bit unsigned per component, c = round((v + 1) / 2 * 65535);
            the all-zero triple marks invalid (it decodes far from unit)
* points    16-bit unsigned per component, c = clamp(round(mm) + 32768,
            0, 65535), i.e. a +-32.768 m window around the camera
* edf       16-bit unsigned pixel distances, rounded to the nearest pixel
            and clamped to 65535

OpenCV is used purely as a PNG codec because it round-trips 16-bit
single- and three-channel rasters; data is handed over in RGB order.
"""

from __future__ import annotations

import os

import cv2
import numpy as np

from .errors import DataError, ManifestError

DEPTH_UNITS_PER_METER = 1000.0  # stored millimeters
POINT_OFFSET = 32768


def encode_depth(depth_m: np.ndarray) -> np.ndarray:
    """Meters to uint16 millimeters; non-positive/non-finite pixels -> 0."""
    d = np.asarray(depth_m, dtype=np.float64)
    mm = np.rint(d * DEPTH_UNITS_PER_METER)
    mm = np.where(np.isfinite(d) & (d > 0.0), mm, 0.0)
    return np.clip(mm, 0, 65535).astype(np.uint16)


def decode_depth(stored: np.ndarray) -> np.ndarray:
    """uint16 millimeters back to float meters (0 stays 0 = invalid)."""
    return np.asarray(stored, dtype=np.float64) / DEPTH_UNITS_PER_METER


def encode_normal(normal: np.ndarray) -> np.ndarray:
    """Unit vectors to uint16 triples; degenerate pixels -> (0, 0, 0)."""
    n = np.asarray(normal, dtype=np.float64)
    enc = np.rint((n + 1.0) / 2.0 * 65535.0)
    enc = np.clip(enc, 0, 65535)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    bad = ~np.isfinite(norm) | (norm <= 0.5)
    enc = np.where(bad, 0.0, enc)
    return enc.astype(np.uint16)


def decode_normal(stored: np.ndarray) -> np.ndarray:
    """uint16 triples back to renormalized unit vectors; invalid -> zeros."""
    v = np.asarray(stored, dtype=np.float64) / 65535.0 * 2.0 - 1.0
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    # A stored all-zero triple decodes to (-1,-1,-1), |.| = sqrt(3): nothing
    # near unit length, so a loose band cleanly separates valid pixels.
    valid = np.abs(norm - 1.0) < 0.1
    unit = v / np.where(norm > 0.0, norm, 1.0)
    return np.where(valid, unit, 0.0)


def encode_semantic(indices: np.ndarray) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() > 255):
        raise DataError("semantic index outside [0, 255]")
    return idx.astype(np.uint8)


def decode_semantic(stored: np.ndarray) -> np.ndarray:
    return np.asarray(stored, dtype=np.uint8)


def encode_points(xyz_m: np.ndarray) -> np.ndarray:
    """Metric xyz to offset uint16 millimeters."""
    mm = np.rint(np.asarray(xyz_m, dtype=np.float64) * DEPTH_UNITS_PER_METER)
    return np.clip(mm + POINT_OFFSET, 0, 65535).astype(np.uint16)


def decode_points(stored: np.ndarray) -> np.ndarray:
    mm = np.asarray(stored, dtype=np.float64) - POINT_OFFSET
    return mm / DEPTH_UNITS_PER_METER


def encode_edf(distance_px: np.ndarray) -> np.ndarray:
    d = np.rint(np.asarray(distance_px, dtype=np.float64))
    return np.clip(d, 0, 65535).astype(np.uint16)


def decode_edf(stored: np.ndarray) -> np.ndarray:
    return np.asarray(stored, dtype=np.float64)


def encode_mask(valid: np.ndarray) -> np.ndarray:
    return np.where(np.asarray(valid, dtype=bool), 255, 0).astype(np.uint8)


def decode_mask(stored: np.ndarray) -> np.ndarray:
    return np.asarray(stored) > 127


def write_raster(path, array: np.ndarray):
    """Write a uint8/uint16 raster as PNG (3-channel data is RGB ordered)."""
    arr = np.asarray(array)
    if arr.dtype not in (np.uint8, np.uint16):
        raise DataError(f"write_raster wants uint8/uint16, got {arr.dtype}")
    if arr.ndim == 3 and arr.shape[2] == 3:
        arr = arr[:, :, ::-1]  # RGB -> BGR for the codec
    elif arr.ndim != 2:
        raise DataError(f"write_raster wants HxW or HxWx3, got {arr.shape}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(arr)):
        raise ManifestError("could not write raster", path=str(path))


def read_raster(path) -> np.ndarray:
    """Read a PNG written by :func:`write_raster` (3-channel comes back RGB)."""
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise ManifestError("could not read raster", path=str(path))
    if arr.ndim == 3 and arr.shape[2] == 3:
        arr = arr[:, :, ::-1]
    return np.ascontiguousarray(arr)
