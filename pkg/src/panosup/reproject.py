"""Task-aware resampling between equirectangular panoramas and perspective patches.

Sampling semantics are fixed by the raster conventions in :mod:`.sphere`:
panorama lookups wrap horizontally at theta = +-pi and clamp vertically at
the poles; patch lookups clamp at the border (callers stay at least half a
pixel inside it, so the clamp is never load bearing).

Task payloads transform, not just resample:

* semantic indices move by nearest-neighbor lookup and are otherwise inert;
* depth converts between the panorama's radial distance and the patch's
  z-depth through cos_axis = d_cam . k (multiply on extract, divide on
  reprojection);
* normals are vectors in the panorama frame and rotate through the pose
  (R^-1 on extract, R on reprojection), re-normalized after interpolation.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import ContractError
from .raster import (ChannelKind, ErpImage, ErpPatchLabel, PatchSample,
                     PatchTask, TASK_TO_KIND)
from .sphere import (CameraPose, perspective_grid, rotation_matrix,
                     spherical_to_pixel, pixel_to_spherical,
                     spherical_to_world)


class SampleMode(Enum):
    BILINEAR = "bilinear"
    NEAREST = "nearest"


def _gather_wrap_clamp(data, xi, yi):
    """Integer lookup with horizontal wrap and vertical clamp."""
    h, w = data.shape[:2]
    xi = np.mod(xi, w)
    yi = np.clip(yi, 0, h - 1)
    return data[yi, xi]


def _bilinear_wrap(data, x, y):
    """Bilinear interpolation on a panorama in pixel-center coordinates."""
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    if data.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    v00 = _gather_wrap_clamp(data, x0, y0)
    v01 = _gather_wrap_clamp(data, x0 + 1, y0)
    v10 = _gather_wrap_clamp(data, x0, y0 + 1)
    v11 = _gather_wrap_clamp(data, x0 + 1, y0 + 1)
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy


def _nearest_wrap(data, x, y):
    # Half-up rounding keeps the tie direction deterministic.
    xi = np.floor(x + 0.5).astype(np.int64)
    yi = np.floor(y + 0.5).astype(np.int64)
    return _gather_wrap_clamp(data, xi, yi)


def _renormalize(vectors):
    norm = np.linalg.norm(vectors, axis=-1, keepdims=True)
    return vectors / np.where(norm > 0.0, norm, 1.0)


def sample_erp(image: ErpImage, theta, phi, mode: SampleMode):
    """Sample a panorama at spherical coordinates.

    Horizontal wrap, vertical clamp.  Bilinear interpolation re-normalizes
    normal payloads; bilinear on semantic indices is a contract error
    (averaging class ids is meaningless).
    """
    if mode is SampleMode.BILINEAR and image.kind is ChannelKind.SEMANTIC:
        raise ContractError("bilinear sampling of semantic indices")
    x, y = spherical_to_pixel(theta, phi, image.width, image.height)
    if mode is SampleMode.NEAREST:
        return _nearest_wrap(image.data, x, y)
    data = image.data.astype(np.float64, copy=False)
    out = _bilinear_wrap(data, x, y)
    if image.kind is ChannelKind.NORMAL:
        out = _renormalize(out)
    return out


def extract_patch(pano: ErpImage, pose: CameraPose, task: PatchTask) -> PatchSample:
    """Cut a perspective patch of task payload out of a panorama."""
    expected = TASK_TO_KIND[task]
    if pano.kind is not expected:
        raise ContractError(
            f"extract_patch: pano carries {pano.kind.value}, task needs "
            f"{expected.value}")
    grid = perspective_grid(pose)
    if task is PatchTask.SEMANTIC:
        data = sample_erp(pano, grid.theta, grid.phi, SampleMode.NEAREST)
    elif task is PatchTask.DEPTH:
        radial = sample_erp(pano, grid.theta, grid.phi, SampleMode.BILINEAR)
        data = radial * grid.cos_axis
    else:
        n_world = sample_erp(pano, grid.theta, grid.phi, SampleMode.BILINEAR)
        r = rotation_matrix(pose.yaw, pose.pitch)
        data = _renormalize(n_world @ r)  # v @ R == R^T @ v, world -> camera
    return PatchSample(task=task, pose=pose, data=data)


def extract_rgb_patch(pano: ErpImage, pose: CameraPose) -> np.ndarray:
    """Plain bilinear RGB crop (uint8), e.g. to hand to perspective annotators."""
    if pano.kind is not ChannelKind.RGB:
        raise ContractError("extract_rgb_patch needs an rgb panorama")
    grid = perspective_grid(pose)
    out = sample_erp(pano, grid.theta, grid.phi, SampleMode.BILINEAR)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _patch_coords(pose: CameraPose, erp_width, erp_height):
    """Where every panorama pixel lands on the patch plane.

    Returns (gx, gy, cos_axis, valid): continuous patch-grid coordinates,
    the cosine between each panorama ray and the optical axis, and the
    frustum mask.  A pixel is valid iff its ray leaves the camera forward
    (cos_axis > 0) and lands at least half a pixel inside the patch border.
    """
    jj, ii = np.meshgrid(np.arange(erp_width), np.arange(erp_height))
    theta, phi = pixel_to_spherical(jj, ii, erp_width, erp_height)
    w = spherical_to_world(theta, phi)
    r = rotation_matrix(pose.yaw, pose.pitch)
    d_cam = w @ r  # world -> camera
    cos_axis = d_cam[..., 2]
    front = cos_axis > 0.0
    f = pose.focal
    # Guard the division; behind-camera pixels are masked out anyway.
    zc = np.where(front, d_cam[..., 2], 1.0)
    gx = f * (d_cam[..., 0] / zc) + pose.width / 2.0
    gy = pose.height / 2.0 - f * (d_cam[..., 1] / zc)
    valid = (front
             & (gx >= 0.5) & (gx <= pose.width - 0.5)
             & (gy >= 0.5) & (gy <= pose.height - 0.5))
    return gx, gy, cos_axis, valid


def _bilinear_clamp(data, x, y):
    """Bilinear lookup on a plain (non-wrapping) patch raster."""
    h, w = data.shape[:2]
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    if data.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    v00 = data[y0c, x0c]
    v01 = data[y0c, x1c]
    v10 = data[y1c, x0c]
    v11 = data[y1c, x1c]
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy


def _nearest_clamp(data, x, y):
    h, w = data.shape[:2]
    xi = np.clip(np.floor(x + 0.5).astype(np.int64), 0, w - 1)
    yi = np.clip(np.floor(y + 0.5).astype(np.int64), 0, h - 1)
    return data[yi, xi]


def reproject_labels(patch: PatchSample, erp_width, erp_height) -> ErpPatchLabel:
    """Paste a perspective patch back onto panorama geometry.

    The validity mask is exactly the frustum test of :func:`_patch_coords`.
    Depth payloads divide by cos_axis (patch z-depth back to panorama radial
    distance); normals rotate camera -> panorama; semantic indices pass
    through a nearest lookup.  Invalid pixels carry zeros.
    """
    if erp_width != 2 * erp_height:
        raise ContractError("panorama target must be 2:1")
    pose = patch.pose
    gx, gy, cos_axis, valid = _patch_coords(pose, erp_width, erp_height)
    # Sampling coordinates have pixel centers at integer indices.  Clipping
    # only moves masked-out pixels (valid ones lie in [0, size-1] already)
    # but keeps near-horizon garbage out of the integer conversion.
    sx = np.clip(gx - 0.5, -1.0, float(pose.width))
    sy = np.clip(gy - 0.5, -1.0, float(pose.height))
    if patch.task is PatchTask.SEMANTIC:
        data = np.zeros((erp_height, erp_width), dtype=patch.data.dtype)
        data[valid] = _nearest_clamp(patch.data, sx, sy)[valid]
    elif patch.task is PatchTask.DEPTH:
        z = _bilinear_clamp(patch.data.astype(np.float64, copy=False), sx, sy)
        data = np.zeros((erp_height, erp_width), dtype=np.float64)
        data[valid] = (z / np.where(cos_axis > 0.0, cos_axis, 1.0))[valid]
    else:
        n_cam = _bilinear_clamp(patch.data.astype(np.float64, copy=False), sx, sy)
        r = rotation_matrix(pose.yaw, pose.pitch)
        n_world = _renormalize(n_cam @ r.T)  # camera -> world
        data = np.zeros((erp_height, erp_width, 3), dtype=np.float64)
        data[valid] = n_world[valid]
    return ErpPatchLabel(task=patch.task, pose=pose, data=data, valid=valid)
