"""Self-contained invariant suite behind the `selftest` subcommand.

Each check re-derives its expectation from an independent route (closed
forms, brute force, hand-computed cases) and raises AssertionError with a
readable message on violation.  The suite is a condensed, dependency-free
mirror of the project's test battery so a deployed install can vouch for
itself.
"""

from __future__ import annotations

import math

import numpy as np

from . import metrics, pipeline
from .auxlabels import (EdgeDistanceField, brute_force_distance,
                        edge_distance_field, image_gradient,
                        jump_flood_distance, metric_point_map)
from .errors import ConfigError
from .nn import (FilmParams, LossWeights, MixerParams, Param, Phase, Role,
                 Stream, Tensor, bridge_cross_attention, erp_token_mixer,
                 film_modulate, l1_loss, masked_mean, mul,
                 multitask_objective, run_checks, spherical_condition,
                 warmup_schedule, sgd_step)
from .raster import ChannelKind, ErpImage, PatchTask
from .reproject import SampleMode, extract_patch, reproject_labels, sample_erp
from .sphere import (CameraPose, RayConvention, erp_row_latitudes,
                     perspective_grid, pixel_to_spherical, ray_direction,
                     rotation_matrix, spherical_to_pixel)


def _smooth_depth(h, w):
    jj, ii = np.meshgrid(np.arange(w), np.arange(h))
    theta, phi = pixel_to_spherical(jj, ii, w, h)
    return ErpImage(2.0 + 0.5 * np.sin(theta) * np.cos(phi)
                    + 0.25 * np.sin(2 * phi), ChannelKind.DEPTH)


def check_sphere_round_trip():
    rng = np.random.Generator(np.random.PCG64(11))
    w, h = 512, 256
    x = rng.uniform(-0.5, w - 0.5, 4000)
    y = rng.uniform(-0.5, h - 0.5, 4000)
    theta, phi = pixel_to_spherical(x, y, w, h)
    x2, y2 = spherical_to_pixel(theta, phi, w, h)
    assert np.abs(x - x2).max() < 1e-9, "pixel->spherical->pixel drifted in x"
    assert np.abs(y - y2).max() < 1e-9, "pixel->spherical->pixel drifted in y"
    theta0, phi0 = pixel_to_spherical(0, 0, 1024, 512)
    assert abs(theta0 - (-np.pi * 1023 / 1024)) < 1e-15
    assert abs(phi0 - (np.pi / 2 * 511 / 512)) < 1e-15


def check_ray_conventions():
    rng = np.random.Generator(np.random.PCG64(12))
    theta = rng.uniform(-np.pi, np.pi, 100000)
    phi = rng.uniform(-np.pi / 2, np.pi / 2, 100000)
    for conv in RayConvention:
        norms = np.linalg.norm(ray_direction(theta, phi, conv), axis=-1)
        assert np.abs(norms - 1.0).max() < 1e-12, f"{conv} rays not unit"
    assert np.allclose(ray_direction(0.0, 0.0, RayConvention.FILM),
                       [1.0, 0.0, 0.0], atol=1e-15)
    assert np.allclose(ray_direction(0.0, 0.0, RayConvention.POINT_MAP),
                       [0.0, 0.0, -1.0], atol=1e-15)


def check_rotations():
    rng = np.random.Generator(np.random.PCG64(13))
    for _ in range(300):
        r = rotation_matrix(rng.uniform(-np.pi, np.pi),
                            rng.uniform(-np.pi / 2, np.pi / 2))
        assert np.abs(r @ r.T - np.eye(3)).max() < 1e-12, "R not orthonormal"
        assert abs(np.linalg.det(r) - 1.0) < 1e-12, "det(R) != 1"
    assert np.abs(rotation_matrix(0.0, 0.0) - np.eye(3)).max() == 0.0


def check_perspective_center():
    pose = CameraPose.from_degrees(37.0, -21.0, 95.0, 129, 129)
    grid = perspective_grid(pose)
    cy, cx = pose.height // 2, pose.width // 2
    assert abs(grid.theta[cy, cx] - pose.yaw) < 1e-12
    assert abs(grid.phi[cy, cx] - pose.pitch) < 1e-12
    assert grid.cos_axis[cy, cx] == 1.0
    assert grid.cos_axis.min() > 0.0 and grid.cos_axis.max() <= 1.0


def check_sample_wrap():
    rng = np.random.Generator(np.random.PCG64(14))
    img = ErpImage(rng.random((64, 128)), ChannelKind.SCALAR)
    # Sample just past +pi: must blend columns W-1 and 0 like wrap padding.
    theta = np.pi - 1e-6
    phi = 0.0
    got = sample_erp(img, theta, phi, SampleMode.BILINEAR)
    x, y = spherical_to_pixel(theta, phi, 128, 64)
    padded = np.pad(img.data, ((0, 0), (0, 1)), mode="wrap")
    x0 = int(np.floor(x))
    fx = x - x0
    y0 = int(np.floor(y))
    fy = y - y0
    ref = (padded[y0, x0] * (1 - fx) * (1 - fy)
           + padded[y0, x0 + 1] * fx * (1 - fy)
           + padded[y0 + 1, x0] * (1 - fx) * fy
           + padded[y0 + 1, x0 + 1] * fx * fy)
    assert abs(float(got) - ref) < 1e-12, "wrap blend mismatch"


def check_depth_round_trip():
    pano = _smooth_depth(128, 256)
    rng = np.random.Generator(np.random.PCG64(15))
    for _ in range(5):
        pose = CameraPose.from_degrees(rng.uniform(0, 360), rng.uniform(-45, 45),
                                       rng.uniform(80, 120), 256, 256)
        patch = extract_patch(pano, pose, PatchTask.DEPTH)
        label = reproject_labels(patch, 256, 128)
        sel = label.valid
        rel = np.abs(label.data[sel] - pano.data[sel]) / pano.data[sel]
        assert rel.max() < 1e-3, f"depth round trip rel error {rel.max():.2e}"


def check_semantic_round_trip():
    # Latitude-band classes: nearest-nearest round trips re-land within half
    # a row (patch sampling outruns the panorama's vertical density), so
    # equality must be exact on every valid pixel.
    bands = np.digitize(erp_row_latitudes(128),
                        np.linspace(-np.pi / 2, np.pi / 2, 9)[1:-1])
    pano = ErpImage(np.repeat(bands.astype(np.uint8)[:, None], 256, axis=1),
                    ChannelKind.SEMANTIC)
    rng = np.random.Generator(np.random.PCG64(16))
    for _ in range(5):
        pose = CameraPose.from_degrees(rng.uniform(0, 360), rng.uniform(-88, 88),
                                       rng.uniform(80, 120), 224, 224)
        patch = extract_patch(pano, pose, PatchTask.SEMANTIC)
        label = reproject_labels(patch, 256, 128)
        sel = label.valid
        assert (label.data[sel] == pano.data[sel]).all(), \
            "semantic round trip not exact"


def check_jfa_exact():
    rng = np.random.Generator(np.random.PCG64(17))
    for _ in range(5):
        mask = rng.random((64, 64)) < 0.01
        mask[32, 32] = True  # guarantee a seed
        dist, rows, cols = jump_flood_distance(mask)
        bdist, brows, bcols = brute_force_distance(mask)
        assert (dist == bdist).all(), "JFA distance differs from brute force"
        assert (rows == brows).all() and (cols == bcols).all(), \
            "JFA winning seeds differ from brute force"


def check_edf_sentinel():
    flat = ErpImage(np.full((32, 64, 3), 128, dtype=np.uint8), ChannelKind.RGB)
    field = edge_distance_field(image_gradient(flat))
    assert isinstance(field, EdgeDistanceField)
    assert field.empty, "constant image should produce the empty flag"
    assert np.allclose(field.distance, math.hypot(32, 64))


def check_point_map():
    pano = _smooth_depth(64, 128)
    pm = metric_point_map(pano)
    norms = np.linalg.norm(pm.xyz, axis=-1)
    assert np.abs(norms[pm.valid] - pano.data[pm.valid]).max() < 1e-6
    assert np.allclose(ray_direction(0.0, 0.0, RayConvention.POINT_MAP),
                       [0, 0, -1])


def check_gradient_cases():
    flat = ErpImage(np.full((16, 32, 3), 77, dtype=np.uint8), ChannelKind.RGB)
    g = image_gradient(flat)
    assert np.abs(g.magnitude).max() == 0.0, "constant image has gradient"
    ramp = np.zeros((16, 32), dtype=np.float64)
    ramp[:, 16:] = 1.0
    g2 = image_gradient(ErpImage(ramp, ChannelKind.SCALAR))
    col = 16  # the rising edge: pure +x gradient away from the wrap seam
    assert g2.gx[8, col] > 0 and abs(g2.gy[8, col]) == 0.0
    g3 = image_gradient(ErpImage(ramp + 5.0, ChannelKind.SCALAR))
    assert np.abs(g2.magnitude - g3.magnitude).max() < 1e-12, \
        "gradient not invariant to constant shift"


def check_gradcheck_quick():
    results = run_checks(seed=5, instances=1)
    bad = [r for r in results if not r.passed]
    assert not bad, f"gradient checks failed: {[r.name for r in bad]}"


def check_film_identity():
    rng = np.random.Generator(np.random.PCG64(18))
    feats = Tensor(rng.normal(0.0, 1.0, (4, 6, 12)), requires_grad=True)
    cond = spherical_condition(6, 12)
    params = FilmParams.zero_init(cond.shape[2], 4)
    out = film_modulate(feats, cond, params)
    assert out.data.tobytes() == feats.data.tobytes(), \
        "zero-init modulation is not the bit-exact identity"


def check_mixer_blend():
    rng = np.random.Generator(np.random.PCG64(19))
    x = Tensor(rng.normal(0.0, 1.0, (2, 5, 16)), requires_grad=True)
    params = MixerParams.random(2, rng)
    lats = np.array([np.pi / 2, np.pi / 4, 0.0, -np.pi / 4, -np.pi / 2])
    out = erp_token_mixer(x, params, latitudes=lats)
    from .nn import autodiff as ad
    narrow = ad.conv2d_valid(ad.erp_pad(x, 1, 1), params.narrow)
    wide = ad.conv2d_valid(ad.erp_pad(x, 1, 4), params.wide)
    assert np.abs(out.data[:, 2, :] - narrow.data[:, 2, :]).max() < 1e-12
    assert np.abs(out.data[:, 0, :] - wide.data[:, 0, :]).max() < 1e-12
    assert np.abs(out.data[:, 4, :] - wide.data[:, 4, :]).max() < 1e-12


def check_truncation():
    rng = np.random.Generator(np.random.PCG64(20))
    for direction in (Stream.VARIANT, Stream.INVARIANT):
        q = Tensor(rng.normal(0.0, 1.0, (3, 4)), requires_grad=True)
        own = Tensor(rng.normal(0.0, 1.0, (2, 4)), requires_grad=True)
        other = Tensor(rng.normal(0.0, 1.0, (2, 4)), requires_grad=True)
        other_stream = (Stream.INVARIANT if direction is Stream.VARIANT
                        else Stream.VARIANT)
        out = bridge_cross_attention(q, [own, other],
                                     [direction, other_stream],
                                     direction, truncate=True)
        masked_mean(mul(out, out), np.ones(out.data.shape, bool)).backward()
        assert other.grad is None, "truncated stream received gradient"
        assert own.grad is not None and np.abs(own.grad).max() > 0.0
        q.grad = own.grad = other.grad = None
        out = bridge_cross_attention(q, [own, other],
                                     [direction, other_stream],
                                     direction, truncate=False)
        masked_mean(mul(out, out), np.ones(out.data.shape, bool)).backward()
        assert other.grad is not None and np.abs(other.grad).max() > 1e-8


def check_warmup_freeze():
    rng = np.random.Generator(np.random.PCG64(21))
    backbone = Param("trunk.w", Tensor(rng.normal(size=(3, 3)),
                                       requires_grad=True), Role.BACKBONE)
    head = Param("head.w", Tensor(rng.normal(size=(3, 3)),
                                  requires_grad=True), Role.HEAD)
    frozen_bytes = backbone.tensor.data.tobytes()
    for _ in range(10):
        loss = l1_loss(mul(backbone.tensor, head.tensor),
                       np.zeros((3, 3)) + 5.0, np.ones((3, 3), bool))
        loss.backward()
        sgd_step(warmup_schedule([backbone, head], Phase.WARMUP), lr=0.1)
        backbone.tensor.grad = head.tensor.grad = None
    assert backbone.tensor.data.tobytes() == frozen_bytes, \
        "backbone moved during warmup"
    sgd_step_params = warmup_schedule([backbone, head], Phase.MAIN)
    assert len(sgd_step_params) == 2


def check_objective():
    main = {name: Tensor(v) for name, v in
            zip(("semantic", "depth", "normal"), (1.0, 2.0, 3.0))}
    aux = {name: Tensor(10.0) for name in ("gradient", "distance", "points")}
    total = multitask_objective(main, aux, LossWeights())
    assert abs(float(total.data) - 6.09) < 1e-12, f"got {float(total.data)}"
    try:
        LossWeights(main={"semantic": -1.0, "depth": 1.0, "normal": 1.0})
    except ConfigError:
        pass
    else:
        raise AssertionError("negative weight accepted")


def check_metric_oracles():
    miou, per_class = metrics.semseg_miou([0, 0, 1, 1], [0, 1, 1, 1],
                                          num_classes=2)
    assert abs(miou - 7 / 12) < 1e-12, f"mIoU {miou}"
    gt = np.full((8, 8), 2.0)
    d = metrics.depth_metrics(gt * 1.3, gt)
    assert abs(d["abs_rel"] - 0.3) < 1e-9
    assert d["delta1"] == 0.0 and d["delta2"] == 100.0
    d2 = metrics.depth_metrics(np.full((4, 4), 2.5), np.full((4, 4), 2.0))
    assert abs(d2["rmse"] - 0.5) < 1e-12
    stl = (64.21, 0.1989, 5.9120)
    assert abs(metrics.delta_mtl(stl, (66.64, 0.1432, 5.4740)) - 13.07) < 0.01
    assert abs(metrics.delta_mtl(stl, (65.17, 0.1501, 5.5220)) - 10.88) < 0.01
    assert metrics.delta_mtl(stl, stl) == 0.0


def check_manifest_determinism():
    a = pipeline.sample_camera_poses(8, seed=7, pano_id="p0")
    b = pipeline.sample_camera_poses(8, seed=7, pano_id="p0")
    assert pipeline.manifest_to_text(a) == pipeline.manifest_to_text(b)
    c = pipeline.sample_camera_poses(8, seed=8, pano_id="p0")
    assert pipeline.manifest_to_text(a) != pipeline.manifest_to_text(c)
    pinned = pipeline.sample_camera_poses(
        4, seed=1, ranges=pipeline.PoseRanges(fov=(90.0, 90.0),
                                              yaw=(10.0, 10.0),
                                              pitch=(0.0, 0.0)))
    for crop in pinned.crops:
        assert (crop.fov_deg, crop.yaw_deg, crop.pitch_deg) == (90.0, 10.0, 0.0)


def check_prompt_render():
    full = pipeline.PromptSpec(domain="indoor", scene="modern kitchen",
                               lighting="golden hour sunset",
                               details="wooden flooring",
                               quality="photorealistic")
    assert pipeline.render_prompt(full) == (
        "A golden hour sunset view of a modern kitchen with wooden "
        "flooring, photorealistic, 360 panorama.")
    bare = pipeline.PromptSpec(domain="indoor", scene="modern kitchen")
    assert pipeline.render_prompt(bare) == \
        "A view of a modern kitchen, 360 panorama."
    assert pipeline.build_prompt(123)[1] == pipeline.build_prompt(123)[1]


ALL_CHECKS = [
    ("sphere round trip", check_sphere_round_trip),
    ("ray conventions", check_ray_conventions),
    ("rotation matrices", check_rotations),
    ("perspective grid center", check_perspective_center),
    ("panorama wrap sampling", check_sample_wrap),
    ("depth round trip", check_depth_round_trip),
    ("semantic round trip", check_semantic_round_trip),
    ("jump flooding vs brute force", check_jfa_exact),
    ("distance field sentinel", check_edf_sentinel),
    ("metric point map", check_point_map),
    ("gradient cases", check_gradient_cases),
    ("gradient checks", check_gradcheck_quick),
    ("modulation identity at zero init", check_film_identity),
    ("mixer latitude blend", check_mixer_blend),
    ("bridge gradient truncation", check_truncation),
    ("warmup freeze", check_warmup_freeze),
    ("objective arithmetic", check_objective),
    ("metric oracles", check_metric_oracles),
    ("manifest determinism", check_manifest_determinism),
    ("prompt rendering", check_prompt_render),
]


def run_selftest(echo=print) -> bool:
    """Run every check; returns True when all pass."""
    ok = True
    for name, fn in ALL_CHECKS:
        try:
            fn()
        except Exception as exc:  # report and continue; one line per check
            ok = False
            echo(f"FAIL {name}: {exc}")
        else:
            echo(f"PASS {name}")
    return ok
