"""Sphere sampling, patch extraction, and label reprojection."""

import numpy as np
import pytest

from conftest import (inward_normal_pano, latitude_band_pano,
                      smooth_depth_pano)
from panosup.errors import ContractError
from panosup.raster import ChannelKind, ErpImage, PatchTask
from panosup.reproject import (SampleMode, extract_patch, extract_rgb_patch,
                               reproject_labels, sample_erp)
from panosup.sphere import (CameraPose, erp_row_latitudes, perspective_grid,
                            spherical_to_world)


def test_bilinear_constant_field():
    img = ErpImage(np.full((32, 64), 7.25), ChannelKind.SCALAR)
    rng = np.random.Generator(np.random.PCG64(0))
    theta = rng.uniform(-np.pi, np.pi, 2000)
    phi = rng.uniform(-np.pi / 2, np.pi / 2, 2000)
    got = sample_erp(img, theta, phi, SampleMode.BILINEAR)
    assert np.abs(got - 7.25).max() < 1e-12


def test_bilinear_seam_blend():
    img = ErpImage(np.arange(8, dtype=np.float64).reshape(2, 4),
                   ChannelKind.SCALAR)
    # theta=pi maps to x=3.5: halfway between column 3 and wrapped column 0.
    got = sample_erp(img, np.pi, erp_row_latitudes(2)[0], SampleMode.BILINEAR)
    assert float(got) == pytest.approx(0.5 * (3.0 + 0.0), abs=1e-12)


def test_nearest_half_up():
    img = ErpImage(np.arange(8, dtype=np.float64).reshape(2, 4),
                   ChannelKind.SCALAR)
    # theta=pi/2 lands on x=2.5 exactly; phi=0 lands on y=0.5 exactly.
    # Half-up rounding sends both to the higher index.
    got = sample_erp(img, np.pi / 2, 0.0, SampleMode.NEAREST)
    assert float(got) == 7.0
    # theta=pi lands on x=3.5, rounds to 4, wraps to column 0.
    got = sample_erp(img, np.pi, 0.0, SampleMode.NEAREST)
    assert float(got) == 4.0


def test_semantic_refuses_bilinear():
    img = ErpImage(np.zeros((4, 8), dtype=np.uint8), ChannelKind.SEMANTIC)
    with pytest.raises(ContractError):
        sample_erp(img, 0.0, 0.0, SampleMode.BILINEAR)
    assert sample_erp(img, 0.0, 0.0, SampleMode.NEAREST) == 0


def test_normals_renormalized_after_blend():
    pano = inward_normal_pano(64)
    rng = np.random.Generator(np.random.PCG64(1))
    theta = rng.uniform(-np.pi, np.pi, 500)
    phi = rng.uniform(-1.2, 1.2, 500)
    got = sample_erp(pano, theta, phi, SampleMode.BILINEAR)
    norms = np.linalg.norm(got, axis=-1)
    assert np.abs(norms - 1.0).max() < 1e-12


def test_depth_patch_is_axial():
    # Constant radial distance R: the perspective patch must hold R*cos to
    # the axis, the z-depth a pinhole camera would record.
    pano = ErpImage(np.full((64, 128), 3.0), ChannelKind.DEPTH)
    pose = CameraPose.from_degrees(123.0, 17.0, 90.0, 96, 96)
    patch = extract_patch(pano, pose, PatchTask.DEPTH)
    grid = perspective_grid(pose)
    assert np.abs(patch.data - 3.0 * grid.cos_axis).max() < 1e-12


def test_normal_patch_center_faces_camera():
    pano = inward_normal_pano(128)
    rng = np.random.Generator(np.random.PCG64(2))
    for _ in range(10):
        pose = CameraPose.from_degrees(rng.uniform(-180, 180),
                                       rng.uniform(-60, 60),
                                       rng.uniform(60, 110), 65, 65)
        patch = extract_patch(pano, pose, PatchTask.NORMAL)
        # Wall right on the optical axis faces straight back at the lens.
        assert np.abs(patch.data[32, 32] - [0.0, 0.0, -1.0]).max() < 2e-3
        norms = np.linalg.norm(patch.data, axis=-1)
        assert np.abs(norms - 1.0).max() < 1e-9


def test_rgb_patch_constant():
    pano = ErpImage(np.full((32, 64, 3), 201, dtype=np.uint8), ChannelKind.RGB)
    pose = CameraPose.from_degrees(-45.0, 30.0, 80.0, 48, 48)
    patch = extract_rgb_patch(pano, pose)
    assert patch.dtype == np.uint8
    assert (patch == 201).all()


def test_depth_round_trip_error():
    pano = smooth_depth_pano(128)
    rng = np.random.Generator(np.random.PCG64(3))
    for _ in range(6):
        pose = CameraPose.from_degrees(rng.uniform(0, 360),
                                       rng.uniform(-45, 45),
                                       rng.uniform(80, 120), 256, 256)
        label = reproject_labels(extract_patch(pano, pose, PatchTask.DEPTH),
                                 256, 128)
        sel = label.valid
        assert sel.any()
        rel = np.abs(label.data[sel] - pano.data[sel]) / pano.data[sel]
        assert rel.max() < 1e-3
        assert (label.data[~sel] == 0.0).all()


def test_semantic_round_trip_exact():
    pano = latitude_band_pano(128, bands=8)
    rng = np.random.Generator(np.random.PCG64(4))
    for _ in range(6):
        pose = CameraPose.from_degrees(rng.uniform(0, 360),
                                       rng.uniform(-88, 88),
                                       rng.uniform(80, 120), 224, 224)
        label = reproject_labels(extract_patch(pano, pose, PatchTask.SEMANTIC),
                                 256, 128)
        sel = label.valid
        assert sel.any()
        assert (label.data[sel] == pano.data[sel]).all()


def test_normal_round_trip_small_angle():
    pano = inward_normal_pano(128)
    rng = np.random.Generator(np.random.PCG64(5))
    for _ in range(6):
        pose = CameraPose.from_degrees(rng.uniform(0, 360),
                                       rng.uniform(-45, 45),
                                       rng.uniform(80, 120), 256, 256)
        label = reproject_labels(extract_patch(pano, pose, PatchTask.NORMAL),
                                 256, 128)
        sel = label.valid
        dots = np.clip(np.sum(label.data[sel] * pano.data[sel], axis=-1),
                       -1.0, 1.0)
        worst = np.degrees(np.arccos(dots.min()))
        assert worst < 0.5


def test_valid_fraction_matches_solid_angle():
    # A square 90 degree frustum subtends 4*arcsin(sin^2 45) = 2*pi/3 sr,
    # one sixth of the sphere; weight rows by cos(latitude) to integrate.
    pano = ErpImage(np.full((128, 256), 2.0), ChannelKind.DEPTH)
    weights = np.cos(erp_row_latitudes(128))[:, None] * np.ones((1, 256))
    rng = np.random.Generator(np.random.PCG64(6))
    for _ in range(4):
        pose = CameraPose.from_degrees(rng.uniform(0, 360),
                                       rng.uniform(-30, 30), 90.0, 256, 256)
        label = reproject_labels(extract_patch(pano, pose, PatchTask.DEPTH),
                                 256, 128)
        frac = (weights * label.valid).sum() / weights.sum()
        assert frac == pytest.approx(1.0 / 6.0, abs=0.01)


def test_valid_region_crosses_seam():
    pano = ErpImage(np.full((64, 128), 2.0), ChannelKind.DEPTH)
    pose = CameraPose.from_degrees(180.0, 0.0, 90.0, 96, 96)
    label = reproject_labels(extract_patch(pano, pose, PatchTask.DEPTH),
                             128, 64)
    mid = label.valid[32]
    assert mid[0] and mid[-1], "frustum straddling the seam lost a side"
    assert not mid[64], "opposite side of the sphere marked valid"


def test_valid_region_inside_frustum_cone():
    pano = ErpImage(np.full((64, 128), 1.0), ChannelKind.DEPTH)
    pose = CameraPose.from_degrees(40.0, 10.0, 70.0, 96, 96)
    label = reproject_labels(extract_patch(pano, pose, PatchTask.DEPTH),
                             128, 64)
    jj, ii = np.meshgrid(np.arange(128), np.arange(64))
    from panosup.sphere import pixel_to_spherical
    theta, phi = pixel_to_spherical(jj, ii, 128, 64)
    dirs = spherical_to_world(theta, phi)
    axis = spherical_to_world(pose.yaw, pose.pitch)
    cos_to_axis = dirs @ axis
    # Everything valid lies within the diagonal half-angle of the frustum.
    diag_half = np.arctan(np.sqrt(2.0) * np.tan(pose.fov / 2.0))
    assert (cos_to_axis[label.valid] >= np.cos(diag_half) - 1e-9).all()


def test_reproject_rejects_bad_target():
    pano = ErpImage(np.full((64, 128), 1.0), ChannelKind.DEPTH)
    pose = CameraPose.from_degrees(0.0, 0.0, 90.0, 32, 32)
    patch = extract_patch(pano, pose, PatchTask.DEPTH)
    with pytest.raises(ContractError):
        reproject_labels(patch, 128, 65)
