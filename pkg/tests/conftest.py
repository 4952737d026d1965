"""Shared synthetic panorama builders for the test suite."""

import numpy as np

from panosup.raster import ChannelKind, ErpImage
from panosup.sphere import (erp_row_latitudes, pixel_to_spherical,
                            spherical_to_world)


def angle_grids(height, width):
    jj, ii = np.meshgrid(np.arange(width), np.arange(height))
    return pixel_to_spherical(jj, ii, width, height)


def smooth_depth_pano(height):
    """Strictly positive radial depth, smooth in both angles."""
    width = 2 * height
    theta, phi = angle_grids(height, width)
    data = 2.0 + 0.5 * np.sin(theta) * np.cos(phi) + 0.25 * np.sin(2.0 * phi)
    return ErpImage(data, ChannelKind.DEPTH)


def inward_normal_pano(height):
    """Unit normals pointing at the viewer (a spherical room).

    Expressed in the chart the pose rotations act on, so a wall on the
    optical axis shows the camera n_cam = (0, 0, -1).
    """
    width = 2 * height
    theta, phi = angle_grids(height, width)
    n = -spherical_to_world(theta, phi)
    return ErpImage(n, ChannelKind.NORMAL)


def latitude_band_pano(height, bands=8):
    """Semantic classes in horizontal latitude bands."""
    width = 2 * height
    edges = np.linspace(-np.pi / 2, np.pi / 2, bands + 1)[1:-1]
    row_class = np.digitize(erp_row_latitudes(height), edges).astype(np.uint8)
    return ErpImage(np.repeat(row_class[:, None], width, axis=1),
                    ChannelKind.SEMANTIC)


def striped_rgb_pano(height, seed=0):
    """Smooth shading plus a pair of hard vertical edges for EDF seeds."""
    width = 2 * height
    rng = np.random.Generator(np.random.PCG64(seed))
    theta, phi = angle_grids(height, width)
    base = 127.5 + 80.0 * np.sin(2.0 * theta) * np.cos(phi)
    rgb = np.repeat(base[:, :, None], 3, axis=2)
    rgb[:, width // 3, :] = 255.0
    rgb[:, width // 3 + 1, :] = 0.0
    rgb = np.clip(rgb + rng.normal(0.0, 1.0, rgb.shape), 0.0, 255.0)
    return ErpImage(rgb.astype(np.uint8), ChannelKind.RGB)
