"""Label-free panoramic supervision toolkit.

Sphere/perspective reprojection with task-aware resampling, derived dense
labels (gradients, edge distance fields, metric point maps), distortion-aware
differentiable operators on equirectangular feature maps, and a multi-task
evaluation harness, plus the command-line pipeline built from those parts.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ContractError, DataError, ManifestError
from .raster import ChannelKind, ErpImage, ErpPatchLabel, PatchSample, PatchTask
from .reproject import (SampleMode, extract_patch, extract_rgb_patch,
                        reproject_labels, sample_erp)
from .sphere import (CameraPose, PerspectiveGrid, RayConvention, camera_rays,
                     erp_row_latitudes, perspective_grid, pixel_to_spherical,
                     ray_direction, rotation_matrix, spherical_to_pixel,
                     spherical_to_world, world_to_spherical, wrap_longitude)
from .auxlabels import (EdgeDistanceField, GradientMap, PointMap,
                        brute_force_distance, edge_distance_field,
                        image_gradient, jump_flood_distance, metric_point_map)
from .metrics import delta_mtl, depth_metrics, normal_metrics, semseg_miou
from .pipeline import (AttributePool, CropManifest, CropPose, IngestError,
                       build_prompt, derive_seed, ingest_predictions,
                       read_manifest, render_prompt, sample_camera_poses,
                       write_manifest)
from .config import ToolConfig, load_tool_config, parse_config_file

__all__ = [
    "__version__",
    "ConfigError", "ContractError", "DataError", "ManifestError",
    "ChannelKind", "ErpImage", "ErpPatchLabel", "PatchSample", "PatchTask",
    "SampleMode", "extract_patch", "extract_rgb_patch", "reproject_labels",
    "sample_erp",
    "CameraPose", "PerspectiveGrid", "RayConvention", "camera_rays",
    "erp_row_latitudes", "perspective_grid", "pixel_to_spherical",
    "ray_direction", "rotation_matrix", "spherical_to_pixel",
    "spherical_to_world", "world_to_spherical", "wrap_longitude",
    "EdgeDistanceField", "GradientMap", "PointMap", "brute_force_distance",
    "edge_distance_field", "image_gradient", "jump_flood_distance",
    "metric_point_map",
    "delta_mtl", "depth_metrics", "normal_metrics", "semseg_miou",
    "AttributePool", "CropManifest", "CropPose", "IngestError",
    "build_prompt", "derive_seed", "ingest_predictions", "read_manifest",
    "render_prompt", "sample_camera_poses", "write_manifest",
    "ToolConfig", "load_tool_config", "parse_config_file",
]
