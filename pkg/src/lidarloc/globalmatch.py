"""Absolute localization against the incrementally built map.

Once per second the current scan is aligned to a crop of the global map
around the last known position; the crop keeps complexity down and
removes ambiguity between look-alike places.  The resulting transform
is an absolute pose measurement for the fusion filters, and decides
whether the scan should be integrated into the map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MapTooSparse, MatchFailed
from .geometry import CartesianScan, Transform2D
from .matching import MatchParams, MatchResult, match


@dataclass(frozen=True)
class GlobalParams:
    """Cropping and scheduling parameters for global matching."""

    crop_factor: float = 1.2        # crop radius = crop_factor * sensor max range
    sensor_max_range: float = 12.0
    slice_half_height: float = 0.5
    update_distance: float = 0.5    # travel needed before the next map insertion
    rate_hz: float = 1.0
    min_crop_points: int = 20
    quality_gate: float = 0.2

    def __post_init__(self) -> None:
        if self.crop_factor < 1.0:
            raise ValueError("crop_factor must be at least 1")
        if self.update_distance <= 0.0:
            raise ValueError("update_distance must be positive")
        if self.rate_hz <= 0.0:
            raise ValueError("rate_hz must be positive")

    @property
    def crop_radius(self) -> float:
        return self.crop_factor * self.sensor_max_range


@dataclass(frozen=True)
class PoseMeasurement:
    """Absolute planar pose extracted from a map alignment."""

    timestamp: float
    x: float
    y: float
    heading: float
    quality: float


def crop_map(
    map_snapshot: np.ndarray,
    center: tuple[float, float],
    flight_height: float,
    params: GlobalParams,
) -> np.ndarray:
    """Points within the crop radius of ``center`` and the vertical slice."""
    pts = np.asarray(map_snapshot, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        return pts
    dx = pts[:, 0] - center[0]
    dy = pts[:, 1] - center[1]
    keep = (np.hypot(dx, dy) <= params.crop_radius) & (
        np.abs(pts[:, 2] - flight_height) <= params.slice_half_height
    )
    return pts[keep]


def localize(
    scan: CartesianScan,
    map_snapshot: np.ndarray,
    prior: Transform2D,
    flight_height: float,
    params: GlobalParams = GlobalParams(),
    match_params: MatchParams = MatchParams(),
) -> tuple[PoseMeasurement, MatchResult]:
    """Align the scan to the cropped map, seeded with the prior pose.

    Raises :class:`MapTooSparse` when the crop holds too few points for
    a meaningful solve, and :class:`MatchFailed` when the alignment
    error exceeds the quality gate.
    """
    if len(scan) == 0:
        raise MatchFailed("cannot localize an empty scan")
    center = (prior.tx, prior.ty)
    cropped = crop_map(map_snapshot, center, flight_height, params)
    if cropped.shape[0] < params.min_crop_points:
        raise MapTooSparse(
            f"map crop holds {cropped.shape[0]} points, need {params.min_crop_points}"
        )
    result = match(scan.xy, cropped[:, :2], match_params, initial_guess=prior, fixed_origin=center)
    t = result.transform
    measurement = PoseMeasurement(
        timestamp=scan.timestamp,
        x=t.tx,
        y=t.ty,
        heading=t.rotation,
        quality=result.final_frmsd,
    )
    if result.final_frmsd > params.quality_gate:
        raise MatchFailed(
            f"global match error {result.final_frmsd:.3f} above gate {params.quality_gate:.3f}",
            result=(measurement, result),
        )
    return measurement, result


def should_update_map(
    current: tuple[float, float],
    last_update: tuple[float, float] | None,
    update_distance: float,
) -> bool:
    """True once the vehicle traveled strictly more than the gate distance."""
    if last_update is None:
        return True
    return math.dist(current, last_update) > update_distance
