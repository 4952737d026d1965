"""Optional color renderings of label rasters (behind the CLI's --emit-vis).

These are for eyeballs only: quantization and colormap choices here carry
no supervision semantics, and nothing downstream reads them back.
"""

from __future__ import annotations

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import hsv_to_rgb


def _apply_cmap(values01: np.ndarray, name: str) -> np.ndarray:
    rgba = colormaps[name](np.clip(values01, 0.0, 1.0))
    return (rgba[..., :3] * 255.0 + 0.5).astype(np.uint8)


def depth_vis(depth_m: np.ndarray) -> np.ndarray:
    d = np.asarray(depth_m, dtype=np.float64)
    valid = np.isfinite(d) & (d > 0.0)
    out = np.zeros(d.shape + (3,), dtype=np.uint8)
    if valid.any():
        lo, hi = d[valid].min(), d[valid].max()
        span = hi - lo if hi > lo else 1.0
        out[valid] = _apply_cmap((d[valid] - lo) / span, "turbo")
    return out


def normal_vis(normal: np.ndarray) -> np.ndarray:
    n = np.asarray(normal, dtype=np.float64)
    return np.clip((n + 1.0) / 2.0 * 255.0 + 0.5, 0, 255).astype(np.uint8)


def semantic_vis(indices: np.ndarray) -> np.ndarray:
    idx = np.asarray(indices).astype(np.int64)
    table = (np.asarray(colormaps["tab20"].colors) * 255.0 + 0.5).astype(np.uint8)
    return table[idx % len(table)]


def edf_vis(distance_px: np.ndarray) -> np.ndarray:
    d = np.asarray(distance_px, dtype=np.float64)
    hi = d.max() if d.size and d.max() > 0 else 1.0
    return _apply_cmap(d / hi, "viridis")


def gradient_hsv_vis(hsv_bytes: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv_bytes, dtype=np.float64) / 255.0
    return (hsv_to_rgb(hsv) * 255.0 + 0.5).astype(np.uint8)


def mask_vis(valid: np.ndarray) -> np.ndarray:
    v = np.asarray(valid, dtype=bool)
    return np.where(v[..., None], 255, 40).astype(np.uint8).repeat(3, axis=-1)
