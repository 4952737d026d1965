"""Flat key-value configuration with file includes.

The format is deliberately boring: one ``key = value`` per line, ``#``
comments, and an ``include = other.cfg`` directive resolved relative to
the including file.  Includes apply in place, so keys written after the
include override what it pulled in; command-line flags override files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from .errors import ConfigError
from .pipeline import (DEFAULT_CROP_COUNT, DEFAULT_FOV_DEG, DEFAULT_PITCH_DEG,
                       DEFAULT_YAW_DEG, PoseRanges)


@dataclass
class ToolConfig:
    """Every knob the CLI exposes, with pipeline defaults baked in."""

    seed: int = 0
    crops: int = DEFAULT_CROP_COUNT
    fov_min_deg: float = DEFAULT_FOV_DEG[0]
    fov_max_deg: float = DEFAULT_FOV_DEG[1]
    yaw_min_deg: float = DEFAULT_YAW_DEG[0]
    yaw_max_deg: float = DEFAULT_YAW_DEG[1]
    pitch_min_deg: float = DEFAULT_PITCH_DEG[0]
    pitch_max_deg: float = DEFAULT_PITCH_DEG[1]
    patch_width: int = 512
    patch_height: int = 512
    pano_width: int = 2048
    pano_height: int = 1024
    root: str = "."
    tasks: str = "semantic,depth,normal"
    lambda_semantic: float = 1.0
    lambda_depth: float = 1.0
    lambda_normal: float = 1.0
    lambda_gradient: float = 0.003
    lambda_distance: float = 0.003
    lambda_points: float = 0.003
    lambda_geo: float = 0.0
    warmup_steps: int = 1000
    jobs: int = 0  # 0 = one worker per logical core
    edf_tau: float = 0.99
    edf_border_px: int = 2
    num_classes: int = 0
    ignore_index: int = 255
    pe_per_angle: int = 8

    def pose_ranges(self) -> PoseRanges:
        return PoseRanges(fov=(self.fov_min_deg, self.fov_max_deg),
                          yaw=(self.yaw_min_deg, self.yaw_max_deg),
                          pitch=(self.pitch_min_deg, self.pitch_max_deg))

    def task_list(self):
        return [t.strip() for t in self.tasks.split(",") if t.strip()]

    def effective_jobs(self) -> int:
        if self.jobs < 0:
            raise ConfigError(f"jobs must be >= 0, got {self.jobs}")
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)


_FIELD_TYPES = {f.name: f.type for f in fields(ToolConfig)}


def parse_config_file(path, _seen=None) -> dict:
    """Read one config file (and its includes) into a flat string dict."""
    path = os.path.abspath(path)
    seen = _seen if _seen is not None else set()
    if path in seen:
        raise ConfigError(f"config include cycle at {path}")
    seen.add(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key == "include":
            target = os.path.join(os.path.dirname(path), value)
            values.update(parse_config_file(target, _seen=seen))
        else:
            values[key] = value
    return values


def _convert(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int", int):
            return int(value)
        if kind in ("float", float):
            return float(value)
        return str(value)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r}") from exc


def load_tool_config(path=None, overrides=None) -> ToolConfig:
    """Defaults, then file values, then non-None overrides (CLI flags)."""
    cfg = ToolConfig()
    if path is not None:
        for key, value in parse_config_file(path).items():
            if key not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r} in {path}")
            setattr(cfg, key, _convert(key, value))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config override {key!r}")
        setattr(cfg, key, value)
    return cfg
