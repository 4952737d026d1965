"""Auxiliary dense labels derived from panoramas themselves.

Three label families, all computed without any annotator in the loop:

* image gradients (Sobel) with an HSV visualization encoding,
* an edge distance field computed by jump flooding over thresholded
  gradient magnitude,
* metric point maps lifted from radial depth along per-pixel unit rays.

Horizontal padding is circular everywhere (the raster is a cylinder cut at
theta = +-pi); vertical padding replicates the pole rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .raster import ChannelKind, ErpImage
from .sphere import RayConvention, pixel_to_spherical, ray_direction

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = np.array([[-1.0, -2.0, -1.0],
                    [0.0, 0.0, 0.0],
                    [1.0, 2.0, 1.0]])


def luma(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an 8-bit RGB raster, scaled to [0, 1]."""
    r, g, b = LUMA_WEIGHTS
    x = np.asarray(rgb, dtype=np.float64) / 255.0
    return x[..., 0] * r + x[..., 1] * g + x[..., 2] * b


def pad_wrap_edge(data: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    """Pad columns circularly, then replicate the top/bottom rows."""
    out = np.pad(data, [(0, 0), (pad_w, pad_w)] + [(0, 0)] * (data.ndim - 2),
                 mode="wrap")
    return np.pad(out, [(pad_h, pad_h), (0, 0)] + [(0, 0)] * (data.ndim - 2),
                  mode="edge")


def _sobel_components(gray: np.ndarray):
    """Sobel gx/gy in difference-grouped form.

    Grouping each tap pair as (right - left) / (down - up) before the row
    and column weighting makes constant regions cancel exactly instead of
    leaving float addition-order residue, so "no edge" really is 0.0.
    """
    p = pad_wrap_edge(gray, 1, 1)
    dx = p[:, 2:] - p[:, :-2]
    gx = dx[:-2, :] + 2.0 * dx[1:-1, :] + dx[2:, :]
    dy = p[2:, :] - p[:-2, :]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return gx, gy


@dataclass
class GradientMap:
    """Sobel response of a panorama.

    ``magnitude`` is sqrt(gx^2 + gy^2) of the stored components;
    ``direction`` is atan2(gy, gx) in (-pi, pi].  ``hsv`` packs direction
    into hue (full turn = 255) and max-normalized magnitude into value,
    with saturation pinned to 255.
    """

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray
    hsv: np.ndarray


def image_gradient(image: ErpImage) -> GradientMap:
    """Sobel gradients of an RGB (via luma) or single-channel panorama."""
    if image.kind is ChannelKind.RGB:
        gray = luma(image.data)
    elif image.kind is ChannelKind.SCALAR:
        gray = image.data.astype(np.float64, copy=False)
    else:
        raise ContractError(
            f"image_gradient wants rgb or scalar, got {image.kind.value}")
    gx, gy = _sobel_components(gray)
    magnitude = np.sqrt(gx * gx + gy * gy)
    direction = np.arctan2(gy, gx)
    peak = magnitude.max()
    value = magnitude / peak if peak > 0.0 else np.zeros_like(magnitude)
    hue = np.mod(direction, 2.0 * np.pi) / (2.0 * np.pi)
    hsv = np.stack([np.rint(hue * 255.0),
                    np.full_like(hue, 255.0),
                    np.rint(value * 255.0)], axis=-1).astype(np.uint8)
    return GradientMap(gx=gx, gy=gy, magnitude=magnitude,
                       direction=direction, hsv=hsv)


@dataclass
class EdgeDistanceField:
    """Per-pixel Euclidean distance to the nearest edge seed.

    ``seed_rows``/``seed_cols`` name the winning seed so that
    distance(p) == ||p - seed(p)|| holds exactly.  ``empty`` flags the
    degenerate no-seed case, where ``distance`` carries the image diagonal
    as a sentinel and seeds are (-1, -1).
    """

    distance: np.ndarray
    seed_rows: np.ndarray
    seed_cols: np.ndarray
    mask: np.ndarray
    empty: bool = False


def jump_flood_distance(mask: np.ndarray):
    """Exact-intent jump flooding over a boolean seed mask.

    Steps run N/2, N/4, ..., 1 with N the smallest power of two covering
    the larger image side; each pass reads the previous buffer only (the
    scheme is order independent).  A single ladder leaves the occasional
    pixel holding a seed slightly farther than the true nearest, so the
    ladder repeats until the field stops changing; every update strictly
    shrinks a pixel's (distance, row, col) key, which bounds the loop.
    One repeat suffices in practice.  Squared distances are compared as
    integers and ties break toward the lexicographically smaller (row, col)
    seed, which makes results reproducible bit for bit.

    Returns (distance, seed_rows, seed_cols); caller guarantees the mask
    has at least one seed.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise ContractError("jump_flood_distance needs at least one seed")

    grid_r, grid_c = np.meshgrid(np.arange(h, dtype=np.int64),
                                 np.arange(w, dtype=np.int64), indexing="ij")
    big = np.int64(2) * (np.int64(h) * h + np.int64(w) * w) + 1
    seed_r = np.where(mask, grid_r, np.int64(-1))
    seed_c = np.where(mask, grid_c, np.int64(-1))
    best_d2 = np.where(mask, np.int64(0), big)

    n = 1
    while n < max(h, w):
        n <<= 1

    offsets = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1)
               if (dr, dc) != (0, 0)]
    while True:
        before_r, before_c = seed_r, seed_c
        step = n >> 1
        while step >= 1:
            cur_r, cur_c, cur_d2 = seed_r, seed_c, best_d2
            new_r, new_c, new_d2 = cur_r.copy(), cur_c.copy(), cur_d2.copy()
            for odr, odc in offsets:
                dr, dc = odr * step, odc * step
                # Pixel p reads neighbor q = p + (dr, dc); only in-bounds q.
                src_r0, src_r1 = max(0, dr), h + min(0, dr)
                src_c0, src_c1 = max(0, dc), w + min(0, dc)
                if src_r0 >= src_r1 or src_c0 >= src_c1:
                    continue
                dst = (slice(src_r0 - dr, src_r1 - dr),
                       slice(src_c0 - dc, src_c1 - dc))
                src = (slice(src_r0, src_r1), slice(src_c0, src_c1))
                cand_r = cur_r[src]
                cand_c = cur_c[src]
                has = cand_r >= 0
                ddr = grid_r[dst] - cand_r
                ddc = grid_c[dst] - cand_c
                d2 = ddr * ddr + ddc * ddc
                nr, nc, nd2 = new_r[dst], new_c[dst], new_d2[dst]
                better = has & ((d2 < nd2)
                                | ((d2 == nd2)
                                   & ((cand_r < nr)
                                      | ((cand_r == nr) & (cand_c < nc)))))
                nr[better] = cand_r[better]
                nc[better] = cand_c[better]
                nd2[better] = d2[better]
                new_r[dst], new_c[dst], new_d2[dst] = nr, nc, nd2
            seed_r, seed_c, best_d2 = new_r, new_c, new_d2
            step >>= 1
        if (np.array_equal(seed_r, before_r)
                and np.array_equal(seed_c, before_c)):
            break

    return np.sqrt(best_d2.astype(np.float64)), seed_r, seed_c


def edge_distance_field(gradient: GradientMap, tau: float = 0.99,
                        border_px: int = 2) -> EdgeDistanceField:
    """Distance to the nearest strong edge.

    Seeds are pixels whose max-normalized gradient magnitude reaches
    ``tau``; a ``border_px``-wide frame is cleared first so raster borders
    do not read as edges.  An empty seed set yields the sentinel field
    (image diagonal everywhere) plus the ``empty`` flag instead of an
    error: downstream weighting treats "no edges" as "far from edges".
    """
    if not (0.0 < tau <= 1.0):
        raise ContractError(f"tau must lie in (0, 1], got {tau}")
    if border_px < 0:
        raise ContractError("border_px must be >= 0")
    magnitude = gradient.magnitude
    h, w = magnitude.shape
    peak = magnitude.max()
    mask = (magnitude >= tau * peak) if peak > 0.0 else np.zeros((h, w), bool)
    if border_px > 0:
        mask = mask.copy()
        mask[:border_px, :] = False
        mask[-border_px:, :] = False
        mask[:, :border_px] = False
        mask[:, -border_px:] = False
    if not mask.any():
        diag = math.hypot(h, w)
        return EdgeDistanceField(
            distance=np.full((h, w), diag, dtype=np.float64),
            seed_rows=np.full((h, w), -1, dtype=np.int64),
            seed_cols=np.full((h, w), -1, dtype=np.int64),
            mask=mask, empty=True)
    distance, seed_rows, seed_cols = jump_flood_distance(mask)
    return EdgeDistanceField(distance=distance, seed_rows=seed_rows,
                             seed_cols=seed_cols, mask=mask, empty=False)


def brute_force_distance(mask: np.ndarray):
    """O(pixels x seeds) nearest-seed scan with the same tie-break.

    Kept alongside the jump-flooding implementation as an independent
    route for verification; do not use on large rasters.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise ContractError("brute_force_distance needs at least one seed")
    grid_r, grid_c = np.meshgrid(np.arange(h, dtype=np.int64),
                                 np.arange(w, dtype=np.int64), indexing="ij")
    dr = grid_r.reshape(-1, 1) - rows.reshape(1, -1)
    dc = grid_c.reshape(-1, 1) - cols.reshape(1, -1)
    d2 = dr * dr + dc * dc
    # Seeds from np.nonzero arrive in (row, col) lexicographic order, so
    # argmin's first-hit rule is exactly the smaller-(row, col) tie-break.
    pick = np.argmin(d2, axis=1)
    best = d2[np.arange(d2.shape[0]), pick]
    return (np.sqrt(best.astype(np.float64)).reshape(h, w),
            rows[pick].reshape(h, w), cols[pick].reshape(h, w))


@dataclass
class PointMap:
    """Metric 3-D points per panorama pixel, camera at the origin."""

    xyz: np.ndarray
    valid: np.ndarray


def metric_point_map(depth: ErpImage) -> PointMap:
    """Lift radial depth to 3-D points P = D * r along POINT_MAP rays.

    ||P|| equals the depth wherever it is valid; non-positive or non-finite
    depth marks the pixel invalid and zeroes its point.
    """
    if depth.kind is not ChannelKind.DEPTH:
        raise ContractError("metric_point_map wants a depth panorama")
    h, w = depth.height, depth.width
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    theta, phi = pixel_to_spherical(jj, ii, w, h)
    rays = ray_direction(theta, phi, RayConvention.POINT_MAP)
    d = depth.data.astype(np.float64, copy=False)
    valid = np.isfinite(d) & (d > 0.0)
    xyz = np.where(valid[..., None], d[..., None] * rays, 0.0)
    return PointMap(xyz=xyz, valid=valid)


def center_point_direction() -> np.ndarray:
    """Unit ray of the raster-center direction (theta = 0, phi = 0).

    Under the POINT_MAP convention this is (0, 0, -1); exposed so tests
    and docs can anchor the orientation without re-deriving it.
    """
    return ray_direction(0.0, 0.0, RayConvention.POINT_MAP)
