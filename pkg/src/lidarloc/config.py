"""Flat key = value configuration for the whole pipeline.

A configuration file is plain text, one ``key = value`` assignment per
line, ``#`` comments allowed.  Every key has a default; unknown keys
are rejected so typos fail loudly.  Any key can also be overridden
through the environment with the ``LIDARLOC_`` prefix (dots become
underscores, case-insensitive), e.g. ``LIDARLOC_MAPPING_RESOLUTION=0.1``.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .fusion import FusionParams
from .globalmatch import GlobalParams
from .matching import MatchParams

ENV_PREFIX = "LIDARLOC_"

#: Default value of every configuration key; the value type defines how
#: file and environment overrides are parsed.
DEFAULTS: dict[str, object] = {
    # scan processing
    "processing.uav_radius": 0.395,
    "processing.ground_threshold": 0.2,
    "processing.noise_radius": 0.5,
    "processing.noise_min_neighbors": 2,
    "processing.noise_filter": True,
    "processing.flight_area": "",       # "x1,y1;x2,y2;..." or empty for unbounded
    # sequential matcher
    "sequential.trim_exponent": 1.2,
    "sequential.window_initial": 0.5,
    "sequential.window_decay": 0.03,
    "sequential.frmsd_stop": 0.01,
    "sequential.delta_stop": 1e-4,
    "sequential.time_budget_ms": 50.0,
    "sequential.max_iterations": 100,
    "sequential.f_grid_step": 0.05,
    "sequential.use_interpolation": True,
    "sequential.use_imrp": True,
    "sequential.use_weighting": True,
    "sequential.use_frmsd": True,
    # global matcher
    "global_matching.trim_exponent": 1.2,
    "global_matching.window_initial": 0.5,
    "global_matching.window_decay": 0.03,
    "global_matching.frmsd_stop": 0.01,
    "global_matching.delta_stop": 1e-4,
    "global_matching.time_budget_ms": 50.0,
    "global_matching.max_iterations": 100,
    "global_matching.f_grid_step": 0.05,
    "global_matching.use_interpolation": True,
    "global_matching.use_imrp": True,
    "global_matching.use_weighting": True,
    "global_matching.use_frmsd": True,
    # global localization scheduling
    "global.crop_factor": 1.2,
    "global.max_range": 12.0,
    "global.slice_half_height": 0.5,
    "global.update_distance": 0.5,
    "global.rate": 1.0,
    "global.min_crop_points": 20,
    "global.quality_gate": 0.2,
    # sequential odometry
    "odometry.quality_gate": 0.2,
    # mapping
    "mapping.resolution": 0.2,
    "mapping.dense_cap": 5_000_000,
    # fusion
    "fusion.jerk_psd_xy": 1.0,
    "fusion.heading_accel_psd": 0.5,
    "fusion.jerk_psd_alt": 1.0,
    "fusion.accel_input_var": 0.01,
    "fusion.r_velocity": 0.05,
    "fusion.r_position": 0.04,
    "fusion.r_heading": 0.01,
    "fusion.r_heading_rate": 0.005,
    "fusion.r_rangefinder": 0.0025,
    "fusion.r_baro_rate": 0.01,
    "fusion.initial_variance": 100.0,
    "fusion.history_seconds": 2.0,
    # pipeline
    "pipeline.origin_x": 0.0,
    "pipeline.origin_y": 0.0,
    "pipeline.origin_heading": 0.0,
    "pipeline.preload_map": "",
}


def _parse_value(key: str, raw: str, like: object):
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            lowered = raw.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("must be finite")
            return value
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def load_settings(path=None, overrides: dict[str, str] | None = None) -> dict[str, object]:
    """Defaults, then file assignments, then environment, then overrides."""
    settings = dict(DEFAULTS)

    if path is not None:
        try:
            lines = open(path).read().splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in settings:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            settings[key] = _parse_value(key, value, DEFAULTS[key])

    env_names = {key.replace(".", "_").upper(): key for key in settings}
    for name, value in os.environ.items():
        if name.startswith(ENV_PREFIX) and name[len(ENV_PREFIX):] in env_names:
            key = env_names[name[len(ENV_PREFIX):]]
            settings[key] = _parse_value(key, value, DEFAULTS[key])

    for key, value in (overrides or {}).items():
        if key not in settings:
            raise ConfigError(f"unknown key {key!r}")
        settings[key] = value if not isinstance(value, str) else _parse_value(key, value, DEFAULTS[key])

    return settings


def digest(settings: dict[str, object]) -> str:
    """Stable hash of a settings mapping, for run manifests."""
    canonical = "\n".join(f"{k}={settings[k]!r}" for k in sorted(settings))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _parse_polygon(text: str) -> np.ndarray | None:
    text = text.strip()
    if not text:
        return None
    try:
        points = [tuple(float(v) for v in pair.split(",")) for pair in text.split(";") if pair.strip()]
        polygon = np.array(points, dtype=float)
        if polygon.ndim != 2 or polygon.shape[1] != 2 or polygon.shape[0] < 3:
            raise ValueError("need at least three x,y pairs")
    except ValueError as exc:
        raise ConfigError(f"bad flight_area polygon {text!r}: {exc}") from exc
    return polygon


def _match_params(settings: dict[str, object], prefix: str) -> MatchParams:
    get = lambda name: settings[f"{prefix}.{name}"]
    return MatchParams(
        trim_exponent=get("trim_exponent"),
        window_initial=get("window_initial"),
        window_decay=get("window_decay"),
        frmsd_stop=get("frmsd_stop"),
        delta_stop=get("delta_stop"),
        time_budget_ms=get("time_budget_ms"),
        max_iterations=get("max_iterations"),
        f_grid_step=get("f_grid_step"),
        use_interpolation=get("use_interpolation"),
        use_imrp=get("use_imrp"),
        use_weighting=get("use_weighting"),
        use_frmsd=get("use_frmsd"),
    )


@dataclass(frozen=True)
class PipelineConfig:
    """Validated, typed view over the flat settings."""

    uav_radius: float
    ground_threshold: float
    noise_radius: float
    noise_min_neighbors: int
    noise_filter: bool
    flight_area: np.ndarray | None
    sequential: MatchParams
    global_matching: MatchParams
    global_params: GlobalParams
    odometry_quality_gate: float
    map_resolution: float
    dense_cap: int
    fusion: FusionParams
    origin: tuple[float, float, float]
    preload_map: str
    settings: dict[str, object]

    @classmethod
    def from_settings(cls, settings: dict[str, object]) -> "PipelineConfig":
        try:
            return cls(
                uav_radius=settings["processing.uav_radius"],
                ground_threshold=settings["processing.ground_threshold"],
                noise_radius=settings["processing.noise_radius"],
                noise_min_neighbors=settings["processing.noise_min_neighbors"],
                noise_filter=settings["processing.noise_filter"],
                flight_area=_parse_polygon(settings["processing.flight_area"]),
                sequential=_match_params(settings, "sequential"),
                global_matching=_match_params(settings, "global_matching"),
                global_params=GlobalParams(
                    crop_factor=settings["global.crop_factor"],
                    sensor_max_range=settings["global.max_range"],
                    slice_half_height=settings["global.slice_half_height"],
                    update_distance=settings["global.update_distance"],
                    rate_hz=settings["global.rate"],
                    min_crop_points=settings["global.min_crop_points"],
                    quality_gate=settings["global.quality_gate"],
                ),
                odometry_quality_gate=settings["odometry.quality_gate"],
                map_resolution=settings["mapping.resolution"],
                dense_cap=settings["mapping.dense_cap"],
                fusion=FusionParams(
                    jerk_psd_xy=settings["fusion.jerk_psd_xy"],
                    heading_accel_psd=settings["fusion.heading_accel_psd"],
                    jerk_psd_alt=settings["fusion.jerk_psd_alt"],
                    accel_input_var=settings["fusion.accel_input_var"],
                    r_velocity=settings["fusion.r_velocity"],
                    r_position=settings["fusion.r_position"],
                    r_heading=settings["fusion.r_heading"],
                    r_heading_rate=settings["fusion.r_heading_rate"],
                    r_rangefinder=settings["fusion.r_rangefinder"],
                    r_baro_rate=settings["fusion.r_baro_rate"],
                    initial_variance=settings["fusion.initial_variance"],
                    history_seconds=settings["fusion.history_seconds"],
                ),
                origin=(
                    settings["pipeline.origin_x"],
                    settings["pipeline.origin_y"],
                    settings["pipeline.origin_heading"],
                ),
                preload_map=settings["pipeline.preload_map"],
                settings=dict(settings),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def load(path=None, overrides: dict[str, str] | None = None) -> PipelineConfig:
    return PipelineConfig.from_settings(load_settings(path, overrides))
