"""Geometry primitives shared by the whole pipeline.

Scans, planar rigid transforms and attitude angles.  All types are
immutable values; bulk point data is stored in numpy arrays (``(n, 2)``
for planar points, ``(n, 3)`` when the vertical coordinate is kept).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Normalize an angle to [-pi, pi)."""
    wrapped = math.fmod(angle + math.pi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorized :func:`wrap_angle` for arrays."""
    return np.mod(np.asarray(angles, dtype=float) + math.pi, TWO_PI) - math.pi


class PolarPoint(NamedTuple):
    """Single LIDAR return: range in meters, bearing in radians [-pi, pi)."""

    range: float
    bearing: float


class Point3(NamedTuple):
    """World-frame point in meters."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Attitude:
    """Vehicle roll/pitch/yaw in radians.

    Only roll and pitch are used for the scan-plane tilt projection; the
    heading is estimated downstream and stays out of the projection.
    """

    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self) -> None:
        if not all(map(math.isfinite, (self.roll, self.pitch, self.yaw))):
            raise ValueError("attitude angles must be finite")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def rotation_matrix(self) -> np.ndarray:
        """World-from-body rotation, extrinsic z-y-x (yaw, pitch, roll)."""
        cr, sr = math.cos(self.roll), math.sin(self.roll)
        cp, sp = math.cos(self.pitch), math.sin(self.pitch)
        cy, sy = math.cos(self.yaw), math.sin(self.yaw)
        rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
        ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
        rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
        return rz @ ry @ rx


@dataclass(frozen=True)
class Transform2D:
    """Rigid planar motion: rotation followed by translation.

    ``apply`` maps points of the moving frame into the fixed frame:
    ``p' = R(rotation) @ p + (tx, ty)``.
    """

    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self) -> None:
        if not all(map(math.isfinite, (self.rotation, self.tx, self.ty))):
            raise ValueError("transform components must be finite")
        object.__setattr__(self, "rotation", wrap_angle(self.rotation))

    @classmethod
    def identity(cls) -> "Transform2D":
        return cls(0.0, 0.0, 0.0)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def matrix(self) -> np.ndarray:
        """3x3 homogeneous form."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s, self.tx], [s, c, self.ty], [0.0, 0.0, 1.0]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Rotate then translate the x/y columns of ``points``.

        Accepts ``(n, 2)`` or ``(n, 3)`` arrays; a z column passes through
        unchanged.  Returns a new array, input is never modified.
        """
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        if single:
            pts = pts[None, :]
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        out = pts.copy()
        out[:, 0] = c * pts[:, 0] - s * pts[:, 1] + self.tx
        out[:, 1] = s * pts[:, 0] + c * pts[:, 1] + self.ty
        return out[0] if single else out

    def compose(self, other: "Transform2D") -> "Transform2D":
        """Transform equivalent to applying ``other`` first, then ``self``."""
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return Transform2D(
            self.rotation + other.rotation,
            c * other.tx - s * other.ty + self.tx,
            s * other.tx + c * other.ty + self.ty,
        )

    def inverse(self) -> "Transform2D":
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return Transform2D(
            -self.rotation,
            -(c * self.tx + s * self.ty),
            -(-s * self.tx + c * self.ty),
        )


def polar_to_cartesian(ranges: np.ndarray, bearings: np.ndarray) -> np.ndarray:
    """Convert polar returns to planar points, shape ``(n, 2)``."""
    r = np.asarray(ranges, dtype=float)
    b = np.asarray(bearings, dtype=float)
    return np.stack([r * np.cos(b), r * np.sin(b)], axis=1)


def cartesian_to_polar(points: np.ndarray, origin=(0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Ranges and bearings of planar points about ``origin``."""
    pts = np.asarray(points, dtype=float)[:, :2] - np.asarray(origin, dtype=float)
    return np.hypot(pts[:, 0], pts[:, 1]), np.arctan2(pts[:, 1], pts[:, 0])


@dataclass(frozen=True)
class PolarScan:
    """One LIDAR revolution: ranges and bearings ordered by bearing.

    Bearings are normalized to [-pi, pi).  The constructor rejects
    negative or non-finite ranges; empty scans are allowed.
    """

    timestamp: float
    ranges: np.ndarray
    bearings: np.ndarray

    def __post_init__(self) -> None:
        r = np.ascontiguousarray(np.asarray(self.ranges, dtype=float))
        b = wrap_angles(np.asarray(self.bearings, dtype=float))
        if r.shape != b.shape or r.ndim != 1:
            raise ValueError("ranges and bearings must be 1-d arrays of equal length")
        if r.size and (not np.all(np.isfinite(r)) or np.any(r < 0.0)):
            raise ValueError("ranges must be finite and non-negative")
        r.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "ranges", r)
        object.__setattr__(self, "bearings", b)

    def __len__(self) -> int:
        return int(self.ranges.size)

    @classmethod
    def from_points(cls, timestamp: float, points: Iterable[tuple[float, float]]) -> "PolarScan":
        pts = list(points)
        ranges = np.array([p[0] for p in pts], dtype=float)
        bearings = np.array([p[1] for p in pts], dtype=float)
        return cls(timestamp, ranges, bearings)

    def points(self) -> list[PolarPoint]:
        return [PolarPoint(float(r), float(b)) for r, b in zip(self.ranges, self.bearings)]

    def to_cartesian(self) -> np.ndarray:
        """Planar projection ignoring tilt, shape ``(n, 2)``."""
        return polar_to_cartesian(self.ranges, self.bearings)


@dataclass(frozen=True)
class CartesianScan:
    """Processed scan: 3-d points in the attitude-compensated sensor frame."""

    timestamp: float
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    def __post_init__(self) -> None:
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, :2]
