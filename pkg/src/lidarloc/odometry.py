"""Scan-to-scan odometry: inter-scan transforms turned into velocities.

Aligning the current scan to the previous one yields the displacement
of the vehicle over the scan interval; dividing by the timestamp delta
gives a velocity measurement for the fusion filters.  Velocities are
expressed in the body frame of the previous scan (heading is unknown at
this stage); the pipeline rotates them into the world frame with the
fused heading estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import MatchFailed, NonPositiveDt
from .geometry import CartesianScan
from .matching import MatchParams, MatchResult, match

#: Alignments with a fractional RMS distance above this are discarded;
#: a bad velocity corrupts the filter more than a missing one.
QUALITY_GATE = 0.2


@dataclass(frozen=True)
class VelocityMeasurement:
    """Planar velocity and yaw rate measured between two scans."""

    timestamp: float
    vx: float
    vy: float
    yaw_rate: float
    quality: float  # final fractional RMS distance of the producing match


def step(
    prev: CartesianScan,
    curr: CartesianScan,
    params: MatchParams = MatchParams(),
    quality_gate: float = QUALITY_GATE,
) -> tuple[VelocityMeasurement, MatchResult]:
    """Match ``curr`` against ``prev`` and convert the transform to velocity.

    Raises :class:`NonPositiveDt` for non-increasing timestamps and
    :class:`MatchFailed` when the alignment error exceeds the quality
    gate.  Matching errors propagate so the caller can skip the scan.
    """
    dt = curr.timestamp - prev.timestamp
    if dt <= 0.0:
        raise NonPositiveDt(f"scan timestamps not increasing: {prev.timestamp} -> {curr.timestamp}")
    result = match(curr.xy, prev.xy, params)
    if result.final_frmsd > quality_gate:
        raise MatchFailed(
            f"sequential match error {result.final_frmsd:.3f} above gate {quality_gate:.3f}",
            result=result,
        )
    t = result.transform
    measurement = VelocityMeasurement(
        timestamp=curr.timestamp,
        vx=t.tx / dt,
        vy=t.ty / dt,
        yaw_rate=t.rotation / dt,
        quality=result.final_frmsd,
    )
    return measurement, result
