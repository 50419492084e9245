"""Raw scan cleanup: close-point, ground, noise and out-of-area removal.

A raw polar scan is turned into a Cartesian scan in five fixed steps:
close points are dropped while still in polar form, the survivors are
lifted into 3-d by the vehicle attitude and altitude, then ground
strikes, isolated noise returns and points outside the flight area are
removed.  Every filter is a pure function; :func:`process` chains them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyScan
from .geometry import Attitude, CartesianScan, PolarScan

#: Sentinel polygon meaning "external-point removal disabled".
UNBOUNDED_AREA = None


@dataclass(frozen=True)
class ProcessingContext:
    """Per-scan filter inputs, rebuilt from the latest state estimate.

    ``flight_area`` is a convex polygon as an ``(k, 2)`` vertex array in
    the world frame, or ``None`` to disable external-point removal.
    ``ground_threshold`` may be ``-inf`` to disable ground removal.
    """

    uav_radius: float = 0.395
    ground_threshold: float = 0.2
    altitude: float = 0.0
    attitude: Attitude = Attitude()
    flight_area: np.ndarray | None = UNBOUNDED_AREA
    last_position: tuple[float, float] = (0.0, 0.0)
    noise_radius: float = 0.5
    noise_min_neighbors: int = 2
    noise_filter_enabled: bool = True

    def __post_init__(self) -> None:
        if self.uav_radius <= 0.0:
            raise ValueError("uav_radius must be positive")
        if self.noise_radius <= 0.0:
            raise ValueError("noise_radius must be positive")
        if self.noise_min_neighbors < 1:
            raise ValueError("noise_min_neighbors must be at least 1")
        if self.flight_area is not None:
            area = np.asarray(self.flight_area, dtype=float)
            if area.ndim != 2 or area.shape[1] != 2 or area.shape[0] < 3:
                raise ValueError("flight_area must be a (k, 2) polygon with k >= 3")
            object.__setattr__(self, "flight_area", area)


def remove_close(scan: PolarScan, uav_radius: float) -> PolarScan:
    """Drop returns closer than the vehicle radius; order is preserved."""
    if uav_radius <= 0.0:
        raise ValueError("uav_radius must be positive")
    keep = scan.ranges >= uav_radius
    return PolarScan(scan.timestamp, scan.ranges[keep], scan.bearings[keep])


def project_by_attitude(scan: PolarScan, attitude: Attitude, altitude: float) -> np.ndarray:
    """Lift polar returns into 3-d by tilt and altitude.

    Each return is a ray of length ``r`` in the sensor plane; the plane is
    rotated by roll and pitch (yaw stays zero, heading is estimated
    downstream) and shifted up by the altitude estimate.  Returns an
    ``(n, 3)`` array.
    """
    level = Attitude(attitude.roll, attitude.pitch, 0.0)
    rays = np.column_stack(
        [
            scan.ranges * np.cos(scan.bearings),
            scan.ranges * np.sin(scan.bearings),
            np.zeros(len(scan)),
        ]
    )
    tilted = rays @ level.rotation_matrix().T
    tilted[:, 2] += altitude
    return tilted


def remove_ground(points: np.ndarray, ground_threshold: float) -> np.ndarray:
    """Keep points at or above the ground threshold (z >= h_min)."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, 3)
    return pts[pts[:, 2] >= ground_threshold]


def remove_noise(points: np.ndarray, radius: float, min_neighbors: int) -> np.ndarray:
    """Keep points with at least ``min_neighbors`` other points within ``radius``.

    Neighborship is evaluated on the input set as a whole, not
    incrementally, so the filter is idempotent only in the sense that a
    second pass removes nothing (survivors keep their surviving
    neighbors).
    """
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] == 0:
        return pts.reshape(0, 3)
    tree = cKDTree(pts)
    # query_ball_point counts the point itself, hence the +1
    counts = np.array([len(idx) for idx in tree.query_ball_point(pts, r=radius)])
    return pts[counts >= min_neighbors + 1]


def _inside_convex_polygon(points_xy: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside or on a convex polygon."""
    verts = np.asarray(polygon, dtype=float)
    edges = np.roll(verts, -1, axis=0) - verts
    # Orientation sign of the polygon itself
    area2 = float(np.sum(verts[:, 0] * np.roll(verts[:, 1], -1) - np.roll(verts[:, 0], -1) * verts[:, 1]))
    sign = 1.0 if area2 >= 0.0 else -1.0
    inside = np.ones(points_xy.shape[0], dtype=bool)
    for v, e in zip(verts, edges):
        cross = e[0] * (points_xy[:, 1] - v[1]) - e[1] * (points_xy[:, 0] - v[0])
        inside &= sign * cross >= -1e-12
    return inside


def remove_external(
    points: np.ndarray,
    area: np.ndarray | None,
    last_position: tuple[float, float],
) -> np.ndarray:
    """Drop points falling outside the flight area.

    Points are placed in the world frame by translating with the last
    known position; the boundary counts as inside.  ``area=None``
    disables the filter.
    """
    pts = np.asarray(points, dtype=float)
    if area is None or pts.shape[0] == 0:
        return pts.reshape(-1, 3)
    world_xy = pts[:, :2] + np.asarray(last_position, dtype=float)
    return pts[_inside_convex_polygon(world_xy, area)]


def process(scan: PolarScan, ctx: ProcessingContext) -> CartesianScan:
    """Run the full filter chain on one raw scan.

    Raises :class:`EmptyScan` when no point survives so the caller can
    skip matching for this scan.
    """
    kept = remove_close(scan, ctx.uav_radius)
    pts = project_by_attitude(kept, ctx.attitude, ctx.altitude)
    pts = remove_ground(pts, ctx.ground_threshold)
    if ctx.noise_filter_enabled:
        pts = remove_noise(pts, ctx.noise_radius, ctx.noise_min_neighbors)
    pts = remove_external(pts, ctx.flight_area, ctx.last_position)
    if pts.shape[0] == 0:
        raise EmptyScan(f"no points survived processing of scan at t={scan.timestamp:.6f}")
    return CartesianScan(scan.timestamp, pts)
