"""Dataset production: pose sampling, crop manifests, prediction ingest, prompts.

Determinism is the core contract here.  Every random draw comes from a
PCG64 stream whose seed is derived by hashing the master seed with the
panorama id (sha256, platform independent), so per-panorama outputs do not
depend on iteration order or worker count, and a manifest written twice is
byte identical.

On disk a panorama directory looks like

    <root>/<pano_id>/manifest                      crop poses (JSON text)
    <root>/<pano_id>/crops/<index>.<task>.png      perspective predictions
    <root>/<pano_id>/labels/<index>.<task>.png     reprojected labels

with crop indices counting from 0 in manifest order.
"""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import codecs
from .errors import ConfigError, DataError, ManifestError
from .raster import ChannelKind, PatchSample, PatchTask
from .sphere import CameraPose

MANIFEST_VERSION = 1
MANIFEST_FILENAME = "manifest"

DEFAULT_CROP_COUNT = 32
DEFAULT_FOV_DEG = (80.0, 120.0)
DEFAULT_YAW_DEG = (0.0, 360.0)   # half-open: 360 is never drawn
DEFAULT_PITCH_DEG = (-90.0, 90.0)


@dataclass(frozen=True)
class PoseRanges:
    """Sampling intervals in degrees; degenerate (lo == hi) pins the value."""

    fov: tuple = DEFAULT_FOV_DEG
    yaw: tuple = DEFAULT_YAW_DEG
    pitch: tuple = DEFAULT_PITCH_DEG

    def __post_init__(self):
        for name, (lo, hi) in (("fov", self.fov), ("yaw", self.yaw),
                               ("pitch", self.pitch)):
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ConfigError(f"invalid {name} range [{lo}, {hi}]")
        if not (0.0 < self.fov[0] and self.fov[1] < 180.0):
            raise ConfigError(f"fov range must sit inside (0, 180), got {self.fov}")
        if self.pitch[0] < -90.0 or self.pitch[1] > 90.0:
            raise ConfigError(f"pitch range must sit inside [-90, 90], got {self.pitch}")
        if self.yaw[1] - self.yaw[0] > 360.0:
            raise ConfigError(f"yaw range wider than a full turn: {self.yaw}")


@dataclass
class CropPose:
    """One sampled crop: pose in degrees plus its patch raster size."""

    index: int
    yaw_deg: float
    pitch_deg: float
    fov_deg: float
    width: int
    height: int

    def to_camera_pose(self) -> CameraPose:
        return CameraPose.from_degrees(self.yaw_deg, self.pitch_deg,
                                       self.fov_deg, self.width, self.height)


@dataclass
class CropManifest:
    """Sampled poses for one panorama, the unit of reproducibility.

    The same manifest drives every task: crops are extracted, annotated
    and reprojected against identical poses so the supervision stays
    pixel-aligned across tasks.
    """

    pano_id: str
    pano_width: int
    pano_height: int
    seed: int
    crops: list = field(default_factory=list)
    version: int = MANIFEST_VERSION


def derive_seed(master_seed: int, pano_id: str) -> int:
    """Stable per-panorama stream seed from the master seed and id."""
    digest = hashlib.sha256(f"{master_seed}:{pano_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def sample_camera_poses(count: int, seed: int, ranges: Optional[PoseRanges] = None,
                        pano_id: str = "", pano_width: int = 2048,
                        pano_height: int = 1024, patch_width: int = 512,
                        patch_height: int = 512) -> CropManifest:
    """Draw crop poses for one panorama.

    Yaw is uniform over the half-open range, pitch and fov over closed
    ranges (numpy's uniform never returns the upper bound; a degenerate
    range returns its single value).  Draw order per crop is fov, yaw,
    pitch and is part of the format: changing it would silently re-deal
    every dataset sampled with old seeds.
    """
    if count < 0:
        raise ConfigError(f"crop count must be >= 0, got {count}")
    if pano_width != 2 * pano_height:
        raise ConfigError("panorama must be 2:1")
    ranges = ranges if ranges is not None else PoseRanges()
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, pano_id)))
    crops = []
    for index in range(count):
        fov = float(rng.uniform(*ranges.fov))
        yaw = float(rng.uniform(*ranges.yaw))
        pitch = float(rng.uniform(*ranges.pitch))
        crops.append(CropPose(index=index, yaw_deg=yaw, pitch_deg=pitch,
                              fov_deg=fov, width=patch_width,
                              height=patch_height))
    return CropManifest(pano_id=pano_id, pano_width=pano_width,
                        pano_height=pano_height, seed=seed, crops=crops)


def manifest_to_text(manifest: CropManifest) -> str:
    """Deterministic serialization: sorted keys, repr floats, one trailing \\n."""
    doc = {
        "version": manifest.version,
        "pano_id": manifest.pano_id,
        "pano_width": manifest.pano_width,
        "pano_height": manifest.pano_height,
        "seed": manifest.seed,
        "crops": [{
            "index": c.index,
            "yaw_deg": c.yaw_deg,
            "pitch_deg": c.pitch_deg,
            "fov_deg": c.fov_deg,
            "width": c.width,
            "height": c.height,
        } for c in manifest.crops],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_manifest(manifest: CropManifest, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(manifest_to_text(manifest))


_CROP_FIELDS = {"index", "yaw_deg", "pitch_deg", "fov_deg", "width", "height"}
_TOP_FIELDS = {"version", "pano_id", "pano_width", "pano_height", "seed", "crops"}


def parse_manifest(text: str, path=None) -> CropManifest:
    """Parse manifest text; unknown fields warn, structural damage raises."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"malformed manifest: {exc.msg}", path=path,
                            line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise ManifestError("manifest root must be an object", path=path)
    version = doc.get("version")
    if version != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest version {version!r}", path=path)
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        warnings.warn(f"manifest {path or '<text>'}: ignoring unknown "
                      f"fields {sorted(unknown)}")
    try:
        crops = []
        for entry in doc["crops"]:
            extra = set(entry) - _CROP_FIELDS
            if extra:
                warnings.warn(f"manifest {path or '<text>'}: crop "
                              f"{entry.get('index')}: ignoring {sorted(extra)}")
            crops.append(CropPose(
                index=int(entry["index"]),
                yaw_deg=float(entry["yaw_deg"]),
                pitch_deg=float(entry["pitch_deg"]),
                fov_deg=float(entry["fov_deg"]),
                width=int(entry["width"]),
                height=int(entry["height"])))
        return CropManifest(pano_id=str(doc["pano_id"]),
                            pano_width=int(doc["pano_width"]),
                            pano_height=int(doc["pano_height"]),
                            seed=int(doc["seed"]), crops=crops,
                            version=int(version))
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"manifest field error: {exc!r}", path=path) from exc


def read_manifest(path) -> CropManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest: {exc.strerror}",
                            path=str(path)) from exc
    return parse_manifest(text, path=str(path))


# ---------------------------------------------------------------------------
# prediction ingest


@dataclass
class IngestError:
    """One crop that could not be ingested; the batch carries on without it."""

    index: int
    path: str
    reason: str


def crop_filename(index: int, task: str, ext: str = "png") -> str:
    return f"{index}.{task}.{ext}"


_DECODERS = {
    PatchTask.SEMANTIC: codecs.decode_semantic,
    PatchTask.DEPTH: codecs.decode_depth,
    PatchTask.NORMAL: codecs.decode_normal,
}


def ingest_predictions(manifest: CropManifest, crops_dir, task: PatchTask):
    """Load per-crop prediction rasters keyed by the manifest.

    Returns ``(samples, errors)``: decoded :class:`PatchSample`s for every
    crop that loads cleanly, and an :class:`IngestError` per crop that is
    missing, unreadable, mis-sized or malformed.  One bad crop never
    aborts the batch.
    """
    samples = []
    errors = []
    for crop in manifest.crops:
        path = os.path.join(crops_dir, crop_filename(crop.index, task.value))
        if not os.path.exists(path):
            errors.append(IngestError(index=crop.index, path=path,
                                      reason="missing file"))
            continue
        try:
            stored = codecs.read_raster(path)
        except ManifestError as exc:
            errors.append(IngestError(index=crop.index, path=path,
                                      reason=str(exc)))
            continue
        if stored.shape[:2] != (crop.height, crop.width):
            errors.append(IngestError(
                index=crop.index, path=path,
                reason=f"size {stored.shape[1]}x{stored.shape[0]} does not "
                       f"match manifest {crop.width}x{crop.height}"))
            continue
        try:
            data = _DECODERS[task](stored)
            samples.append(PatchSample(task=task, pose=crop.to_camera_pose(),
                                       data=data))
        except (DataError, ValueError) as exc:
            errors.append(IngestError(index=crop.index, path=path,
                                      reason=str(exc)))
    return samples, errors


# ---------------------------------------------------------------------------
# prompt engine


@dataclass
class AttributePool:
    """Editable phrase pools the prompt sampler draws from."""

    indoor_scenes: list
    outdoor_scenes: list
    lighting: list
    details: list
    quality: list

    def __post_init__(self):
        for name in ("indoor_scenes", "outdoor_scenes", "lighting",
                     "details", "quality"):
            if not getattr(self, name):
                raise ConfigError(f"attribute pool category {name!r} is empty")

    @classmethod
    def from_json_file(cls, path) -> "AttributePool":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read attribute pool {path}: "
                              f"{exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed attribute pool {path}: {exc}") from exc
        try:
            return cls(indoor_scenes=list(doc["indoor_scenes"]),
                       outdoor_scenes=list(doc["outdoor_scenes"]),
                       lighting=list(doc["lighting"]),
                       details=list(doc["details"]),
                       quality=list(doc["quality"]))
        except KeyError as exc:
            raise ConfigError(f"attribute pool {path} missing category {exc}") from exc


DEFAULT_ATTRIBUTE_POOL = AttributePool(
    indoor_scenes=[
        "modern kitchen", "cozy living room", "sunlit bedroom",
        "open-plan office", "marble-floored lobby", "cluttered workshop",
        "minimalist bathroom", "home library",
    ],
    outdoor_scenes=[
        "dense pine forest", "alpine meadow", "busy city intersection",
        "quiet suburban street", "rocky coastline", "desert canyon",
        "terraced rice fields", "lakeside campground",
    ],
    lighting=[
        "golden hour sunset", "overcast midday", "blue hour twilight",
        "harsh noon sun", "soft morning light", "neon-lit night",
    ],
    details=[
        "wooden flooring", "exposed brick walls", "lush vegetation",
        "scattered furniture", "wet reflective surfaces", "distant mountains",
    ],
    quality=[
        "photorealistic", "8k", "cinematic lighting", "highly detailed",
        "masterpiece",
    ],
)

INDOOR_PROBABILITY = 0.6
SLOT_PROBABILITY = 0.5


@dataclass(frozen=True)
class PromptSpec:
    """The structured draw behind one prompt; None marks an absent slot."""

    domain: str
    scene: str
    lighting: Optional[str] = None
    details: Optional[str] = None
    quality: Optional[str] = None


def build_prompt(seed: int, pool: Optional[AttributePool] = None):
    """Sample a prompt spec and render it.

    Draw order (part of the format, like the pose sampler's): domain,
    scene, then for each of lighting/details/quality a presence coin
    followed by a pick only when present.  Domain is indoor with
    probability 0.6; each optional slot is present with probability 0.5.
    """
    pool = pool if pool is not None else DEFAULT_ATTRIBUTE_POOL
    rng = np.random.Generator(np.random.PCG64(seed))
    indoor = rng.random() < INDOOR_PROBABILITY
    scenes = pool.indoor_scenes if indoor else pool.outdoor_scenes
    scene = scenes[int(rng.integers(len(scenes)))]

    def maybe(options):
        if rng.random() < SLOT_PROBABILITY:
            return options[int(rng.integers(len(options)))]
        return None

    spec = PromptSpec(domain="indoor" if indoor else "outdoor",
                      scene=scene,
                      lighting=maybe(pool.lighting),
                      details=maybe(pool.details),
                      quality=maybe(pool.quality))
    return spec, render_prompt(spec)


def render_prompt(spec: PromptSpec) -> str:
    """Assemble the prompt; absent slots drop their connective words too."""
    head = f"A {spec.lighting} view of a" if spec.lighting else "A view of a"
    text = f"{head} {spec.scene}"
    if spec.details:
        text += f" with {spec.details}"
    if spec.quality:
        text += f", {spec.quality}"
    return text + ", 360 panorama."
