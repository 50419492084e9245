"""Trajectory and map quality metrics.

The trajectory error aligns the estimate to the ground truth with the
best rigid planar transform before computing the position RMSE, so a
consistent but shifted estimate scores zero.  Heading error skips the
alignment (heading is absolute).  Map sharpness is measured as the mean
differential entropy of local point neighborhoods; a crisper map means
lower entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InsufficientOverlap, NoValidPoints
from .geometry import wrap_angles


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered planar pose samples (timestamp, x, y, heading)."""

    timestamps: np.ndarray
    xy: np.ndarray
    headings: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.timestamps, dtype=float)
        xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        h = np.asarray(self.headings, dtype=float)
        if not (t.size == xy.shape[0] == h.size):
            raise ValueError("trajectory arrays must have equal length")
        if t.size >= 2 and np.any(np.diff(t) <= 0.0):
            raise ValueError("timestamps must strictly increase")
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "headings", h)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "Trajectory":
        """Rows of (timestamp, x, y, heading)."""
        rows = np.asarray(rows, dtype=float).reshape(-1, 4)
        return cls(rows[:, 0], rows[:, 1:3], rows[:, 3])


def _associate(estimate: Trajectory, truth: Trajectory):
    """Truth resampled at estimate timestamps by linear interpolation."""
    t = estimate.timestamps
    keep = (t >= truth.timestamps[0]) & (t <= truth.timestamps[-1])
    if int(np.sum(keep)) < 2:
        raise InsufficientOverlap("fewer than two associated trajectory samples")
    t = t[keep]
    truth_xy = np.column_stack(
        [
            np.interp(t, truth.timestamps, truth.xy[:, 0]),
            np.interp(t, truth.timestamps, truth.xy[:, 1]),
        ]
    )
    # interpolate heading on the unwrapped angle so +-pi crossings stay sane
    unwrapped = np.unwrap(truth.headings)
    truth_heading = wrap_angles(np.interp(t, truth.timestamps, unwrapped))
    return estimate.xy[keep], estimate.headings[keep], truth_xy, truth_heading


def _rigid_align(source_xy: np.ndarray, target_xy: np.ndarray):
    """Rotation angle and translation minimizing the total squared error."""
    mu_s = source_xy.mean(axis=0)
    mu_t = target_xy.mean(axis=0)
    a = source_xy - mu_s
    b = target_xy - mu_t
    dot = float(np.sum(a * b))
    cross = float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))
    theta = math.atan2(cross, dot) if (dot != 0.0 or cross != 0.0) else 0.0
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    trans = mu_t - rot @ mu_s
    return rot, trans


def ate(estimate: Trajectory, truth: Trajectory) -> float:
    """Absolute trajectory error: position RMSE after rigid planar alignment."""
    est_xy, _, truth_xy, _ = _associate(estimate, truth)
    rot, trans = _rigid_align(est_xy, truth_xy)
    residual = est_xy @ rot.T + trans - truth_xy
    return float(np.sqrt(np.mean(np.sum(residual**2, axis=1))))


def heading_rmse(estimate: Trajectory, truth: Trajectory) -> float:
    """RMSE of wrapped heading differences; no alignment is removed."""
    _, est_h, _, truth_h = _associate(estimate, truth)
    err = wrap_angles(est_h - truth_h)
    return float(np.sqrt(np.mean(err**2)))


def mme(map_points: np.ndarray, radius: float = 0.3) -> tuple[float, int]:
    """Mean map entropy of a point cloud.

    For every point the sample covariance of its neighbors within
    ``radius`` contributes 0.5 * ln |2 pi e Sigma|; points whose
    neighborhood is too small or degenerate are skipped, and the mean
    runs over the contributing points.  Returns ``(entropy, skipped)``;
    raises :class:`NoValidPoints` when nothing contributes.
    """
    pts = np.asarray(map_points, dtype=float).reshape(-1, 3)
    if pts.shape[0] == 0:
        raise NoValidPoints("empty map")
    tree = cKDTree(pts)
    two_pi_e = 2.0 * math.pi * math.e
    total = 0.0
    used = 0
    for k, neighbors in enumerate(tree.query_ball_point(pts, r=radius)):
        idx = sorted(neighbors)
        if len(idx) < 4:
            continue
        cov = np.cov(pts[idx].T, bias=False)
        sign, logdet = np.linalg.slogdet(cov)
        if sign <= 0.0:
            continue
        total += 0.5 * (3.0 * math.log(two_pi_e) + logdet)
        used += 1
    if used == 0:
        raise NoValidPoints("no point had a non-degenerate neighborhood")
    return total / used, pts.shape[0] - used


def loop_drift(trajectory: Trajectory) -> float:
    """Planar distance between the first and last trajectory points."""
    if len(trajectory) < 2:
        raise ValueError("loop drift needs at least two samples")
    return float(np.hypot(*(trajectory.xy[-1] - trajectory.xy[0])))
