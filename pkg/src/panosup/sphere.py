"""Sphere and perspective-camera geometry for equirectangular rasters.

Conventions, fixed once here and relied on everywhere else:

* An equirectangular raster has width == 2 * height.  Pixel (x, y) has its
  center at longitude/latitude

      u = 2 * (x + 0.5) / width  - 1        theta = u * pi
      v = 2 * (y + 0.5) / height - 1        phi   = -v * pi / 2

  so row 0 is the top of the image and maps to positive latitude (up),
  column 0 sits just east of theta = -pi.  Longitude wraps at +-pi,
  latitude clamps at the poles.

* The world frame used by the reprojection path is right handed with +y up:
  a direction at (theta, phi) is

      w = (cos phi * sin theta,  sin phi,  cos phi * cos theta)

  i.e. theta = 0 looks down +z and positive theta turns toward +x.  The two
  published ray conventions below are separate charts consumed by specific
  operations (conditioning features, point maps); they are not this frame.

* The pinhole camera frame is +x right, +y up, +z forward; the optical axis
  is k = (0, 0, 1).  A pose (yaw, pitch) maps camera to world via
  R = R_yaw(psi) . R_pitch(eta), yaw about the global up axis and pitch
  about the camera-right axis, positive pitch looking up.  The center ray
  of pose (psi, eta) therefore lands exactly at (theta, phi) = (psi, eta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError


class RayConvention(Enum):
    """Published unit-ray charts.

    FILM:       d = (cos phi * cos theta, sin phi, cos phi * sin theta);
                forward at the origin is +x.  Used for conditioning inputs.
    POINT_MAP:  r = (cos phi * sin theta, sin phi, -cos phi * cos theta);
                forward at the origin is -z.  Used for metric point maps.
    """

    FILM = "film"
    POINT_MAP = "point_map"


@dataclass(frozen=True)
class CameraPose:
    """A virtual pinhole camera inside a panorama.

    Angles are radians; ``fov`` is the full horizontal field of view and
    applies to the patch width (square pixels, so the vertical extent
    follows from ``height / width``).
    """

    yaw: float
    pitch: float
    fov: float
    width: int
    height: int

    def __post_init__(self):
        if not (0.0 < self.fov < math.pi):
            raise ConfigError(f"fov must lie in (0, pi), got {self.fov}")
        if self.width < 2 or self.height < 2:
            raise ConfigError(
                f"patch must be at least 2x2, got {self.width}x{self.height}")
        if not (-math.pi / 2 <= self.pitch <= math.pi / 2):
            raise ConfigError(f"pitch must lie in [-pi/2, pi/2], got {self.pitch}")

    @classmethod
    def from_degrees(cls, yaw_deg, pitch_deg, fov_deg, width, height):
        return cls(math.radians(yaw_deg), math.radians(pitch_deg),
                   math.radians(fov_deg), int(width), int(height))

    @property
    def focal(self) -> float:
        """Focal length in pixels: (width/2) / tan(fov/2)."""
        return (self.width / 2.0) / math.tan(self.fov / 2.0)


def wrap_longitude(theta):
    """Wrap longitudes into [-pi, pi)."""
    return (np.asarray(theta, dtype=np.float64) + np.pi) % (2.0 * np.pi) - np.pi


def clamp_latitude(phi):
    """Clamp latitudes into [-pi/2, pi/2]."""
    return np.clip(np.asarray(phi, dtype=np.float64), -np.pi / 2, np.pi / 2)


def pixel_to_spherical(x, y, width, height):
    """Map pixel coordinates to (theta, phi) with centers at integer indices.

    Accepts scalars or arrays.  Continuous coordinates are allowed within
    the raster footprint [-0.5, size - 0.5]; anything outside raises.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(x < -0.5) or np.any(x > width - 0.5):
        raise ConfigError(f"pixel x out of range [0, {width})")
    if np.any(y < -0.5) or np.any(y > height - 0.5):
        raise ConfigError(f"pixel y out of range [0, {height})")
    u = 2.0 * (x + 0.5) / width - 1.0
    v = 2.0 * (y + 0.5) / height - 1.0
    return u * np.pi, -v * (np.pi / 2.0)


def spherical_to_pixel(theta, phi, width, height):
    """Inverse of :func:`pixel_to_spherical`; wraps/clamps first.

    Returns continuous pixel coordinates (centers at integer indices).
    """
    theta = wrap_longitude(theta)
    phi = clamp_latitude(phi)
    x = (theta / np.pi + 1.0) * (width / 2.0) - 0.5
    y = (-phi / (np.pi / 2.0) + 1.0) * (height / 2.0) - 0.5
    return x, y


def erp_row_latitudes(height):
    """Latitude of every pixel row center, top row first (shape (height,))."""
    y = np.arange(height, dtype=np.float64)
    v = 2.0 * (y + 0.5) / height - 1.0
    return -v * (np.pi / 2.0)


def ray_direction(theta, phi, convention: RayConvention):
    """Unit rays for (theta, phi) under one of the published conventions.

    Output shape is ``theta.shape + (3,)``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    cp = np.cos(phi)
    if convention is RayConvention.FILM:
        return np.stack([cp * np.cos(theta), np.sin(phi), cp * np.sin(theta)],
                        axis=-1)
    if convention is RayConvention.POINT_MAP:
        return np.stack([cp * np.sin(theta), np.sin(phi), -cp * np.cos(theta)],
                        axis=-1)
    raise ConfigError(f"unknown ray convention {convention!r}")


def spherical_to_world(theta, phi):
    """Directions in the internal world frame (see module docstring)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    cp = np.cos(phi)
    return np.stack([cp * np.sin(theta), np.sin(phi), cp * np.cos(theta)],
                    axis=-1)


def world_to_spherical(d):
    """Inverse chart: world directions (need not be unit) to (theta, phi)."""
    d = np.asarray(d, dtype=np.float64)
    theta = np.arctan2(d[..., 0], d[..., 2])
    norm = np.linalg.norm(d, axis=-1)
    # Guard the degenerate zero vector; callers never feed it but a hard
    # divide-by-zero here would poison whole arrays.
    safe = np.where(norm > 0.0, norm, 1.0)
    phi = np.arcsin(np.clip(d[..., 1] / safe, -1.0, 1.0))
    return theta, phi


def rotation_matrix(yaw, pitch):
    """Camera-to-world rotation R = R_yaw(psi) . R_pitch(eta).

    Yaw rotates about the world up axis (+y), pitch about the camera-right
    axis (+x) with positive pitch looking up.  R @ (0, 0, 1) is the world
    direction of the optical axis and lands at (theta, phi) = (yaw, pitch).
    """
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    r_yaw = np.array([[cy, 0.0, sy],
                      [0.0, 1.0, 0.0],
                      [-sy, 0.0, cy]])
    r_pitch = np.array([[1.0, 0.0, 0.0],
                        [0.0, cp, sp],
                        [0.0, -sp, cp]])
    return r_yaw @ r_pitch


def camera_rays(pose: CameraPose, gx, gy):
    """Camera-frame unit rays for continuous patch-grid coordinates.

    ``gx`` runs over [0, width] and ``gy`` over [0, height]; pixel (col j,
    row i) has its center at (j + 0.5, i + 0.5) and the patch corner is
    (0, 0).  Returns ``(d_cam, cos_axis)`` where ``cos_axis = d_cam . k``
    with k the optical axis; it lies in (0, 1] and equals 1 exactly on the
    optical axis.
    """
    gx = np.asarray(gx, dtype=np.float64)
    gy = np.asarray(gy, dtype=np.float64)
    f = pose.focal
    xc = gx - pose.width / 2.0
    yc = pose.height / 2.0 - gy
    zc = np.full(np.broadcast(xc, yc).shape, f, dtype=np.float64)
    d = np.stack([np.broadcast_to(xc, zc.shape),
                  np.broadcast_to(yc, zc.shape), zc], axis=-1)
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    d = d / norm
    return d, d[..., 2]


@dataclass(frozen=True)
class PerspectiveGrid:
    """Per-pixel geometry of a perspective patch inside a panorama.

    ``theta``/``phi`` are the panorama coordinates each patch pixel looks
    at, ``d_cam`` the camera-frame unit rays, ``cos_axis = d_cam . k``.
    All arrays are (height, width[, 3]).
    """

    pose: CameraPose
    theta: np.ndarray
    phi: np.ndarray
    d_cam: np.ndarray
    cos_axis: np.ndarray


def perspective_grid(pose: CameraPose) -> PerspectiveGrid:
    """Evaluate the patch geometry at every pixel center."""
    jj, ii = np.meshgrid(np.arange(pose.width), np.arange(pose.height))
    d_cam, cos_axis = camera_rays(pose, jj + 0.5, ii + 0.5)
    r = rotation_matrix(pose.yaw, pose.pitch)
    d_world = d_cam @ r.T
    theta, phi = world_to_spherical(d_world)
    return PerspectiveGrid(pose=pose, theta=theta, phi=phi,
                           d_cam=d_cam, cos_axis=cos_axis)
