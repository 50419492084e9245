"""Decoupled linear Kalman filters producing the fused pose estimate.

Planar position is estimated per axis with a constant-acceleration
model (x, xdot, xddot), heading with a two-state model, and altitude
with a three-state model driven by the gravity-aligned IMU
acceleration.  Sequential matching feeds velocity corrections, global
matching feeds position and heading corrections, the rangefinder and
barometric rate correct the altitude channel.

All updates use the Joseph form and re-symmetrize the covariance so it
stays symmetric positive-definite over long runs.  The estimator keeps
a short snapshot ring so that measurements arriving late (global
matching lags the scan-rate path) can be applied by rewinding and
replaying the affected stretch.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveDt
from .geometry import wrap_angle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusionParams:
    """Process / measurement noise configuration.

    The paper-style models assume zero-mean Gaussian noise without
    fixing magnitudes; these defaults were tuned on the simulator and
    are exposed through the configuration file.
    """

    jerk_psd_xy: float = 1.0            # white-jerk PSD for the x/y axes, m^2/s^5
    heading_accel_psd: float = 0.5      # white angular acceleration PSD, rad^2/s^3
    jerk_psd_alt: float = 1.0
    accel_input_var: float = 0.01       # IMU acceleration input noise, (m/s^2)^2
    r_velocity: float = 0.05            # (m/s)^2
    r_position: float = 0.04            # m^2
    r_heading: float = 0.01             # rad^2
    r_heading_rate: float = 0.005       # (rad/s)^2
    r_rangefinder: float = 0.0025       # m^2
    r_baro_rate: float = 0.01           # (m/s)^2
    initial_variance: float = 100.0
    history_seconds: float = 2.0


def _jerk_q(dt: float, psd: float) -> np.ndarray:
    """Discretized white-jerk process noise for a 3-state kinematic model."""
    dt2, dt3, dt4, dt5 = dt**2, dt**3, dt**4, dt**5
    return psd * np.array(
        [
            [dt5 / 20.0, dt4 / 8.0, dt3 / 6.0],
            [dt4 / 8.0, dt3 / 3.0, dt2 / 2.0],
            [dt3 / 6.0, dt2 / 2.0, dt],
        ]
    )


def _scalar_update(state, cov, index: int, innovation: float, variance: float):
    """Joseph-form Kalman update for a single observed state component."""
    if math.isinf(variance):
        return state, cov
    n = state.size
    s = cov[index, index] + variance
    gain = cov[:, index] / s
    state = state + gain * innovation
    ikh = np.eye(n)
    ikh[:, index] -= gain
    cov = ikh @ cov @ ikh.T + variance * np.outer(gain, gain)
    return state, 0.5 * (cov + cov.T)


class AxisFilter:
    """Constant-acceleration estimator for one planar axis."""

    def __init__(self, jerk_psd: float = 1.0, initial_variance: float = 100.0, initial_value: float = 0.0):
        self.jerk_psd = jerk_psd
        self.state = np.array([initial_value, 0.0, 0.0])
        self.cov = np.eye(3) * initial_variance

    def predict(self, dt: float) -> "AxisFilter":
        if dt <= 0.0:
            raise NonPositiveDt(f"prediction step must be positive, got {dt}")
        a = np.array([[1.0, dt, 0.5 * dt**2], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
        self.state = a @ self.state
        cov = a @ self.cov @ a.T + _jerk_q(dt, self.jerk_psd)
        self.cov = 0.5 * (cov + cov.T)
        return self

    def correct_position(self, value: float, variance: float) -> "AxisFilter":
        self.state, self.cov = _scalar_update(self.state, self.cov, 0, value - self.state[0], variance)
        return self

    def correct_velocity(self, value: float, variance: float) -> "AxisFilter":
        self.state, self.cov = _scalar_update(self.state, self.cov, 1, value - self.state[1], variance)
        return self

    def copy(self) -> "AxisFilter":
        dup = AxisFilter(self.jerk_psd)
        dup.state = self.state.copy()
        dup.cov = self.cov.copy()
        return dup


class HeadingFilter:
    """Two-state heading estimator with wrapped innovations."""

    def __init__(self, accel_psd: float = 0.5, initial_variance: float = 100.0, initial_value: float = 0.0):
        self.accel_psd = accel_psd
        self.state = np.array([wrap_angle(initial_value), 0.0])
        self.cov = np.eye(2) * initial_variance

    def predict(self, dt: float) -> "HeadingFilter":
        if dt <= 0.0:
            raise NonPositiveDt(f"prediction step must be positive, got {dt}")
        a = np.array([[1.0, dt], [0.0, 1.0]])
        self.state = a @ self.state
        self.state[0] = wrap_angle(self.state[0])
        q = self.accel_psd * np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
        cov = a @ self.cov @ a.T + q
        self.cov = 0.5 * (cov + cov.T)
        return self

    def correct_heading(self, value: float, variance: float) -> "HeadingFilter":
        innovation = wrap_angle(value - self.state[0])
        self.state, self.cov = _scalar_update(self.state, self.cov, 0, innovation, variance)
        self.state[0] = wrap_angle(self.state[0])
        return self

    def correct_rate(self, value: float, variance: float) -> "HeadingFilter":
        self.state, self.cov = _scalar_update(self.state, self.cov, 1, value - self.state[1], variance)
        return self

    def copy(self) -> "HeadingFilter":
        dup = HeadingFilter(self.accel_psd)
        dup.state = self.state.copy()
        dup.cov = self.cov.copy()
        return dup


class AltitudeFilter:
    """Three-state altitude estimator driven by IMU acceleration.

    The prediction replaces the acceleration state with the measured
    gravity-aligned acceleration (zero-order hold), i.e.
    ``x' = A0 x + B u`` with ``B = [dt^2/2, dt, 1]`` and ``A0`` the
    kinematic matrix with the acceleration column moved into ``B``.
    The rangefinder corrects altitude, the barometric rate corrects the
    vertical velocity.
    """

    def __init__(
        self,
        jerk_psd: float = 1.0,
        accel_input_var: float = 0.01,
        initial_variance: float = 100.0,
        initial_value: float = 0.0,
    ):
        self.jerk_psd = jerk_psd
        self.accel_input_var = accel_input_var
        self.state = np.array([initial_value, 0.0, 0.0])
        self.cov = np.eye(3) * initial_variance

    def predict(self, dt: float, accel: float = 0.0) -> "AltitudeFilter":
        if dt <= 0.0:
            raise NonPositiveDt(f"prediction step must be positive, got {dt}")
        a = np.array([[1.0, dt, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        b = np.array([0.5 * dt**2, dt, 1.0])
        self.state = a @ self.state + b * accel
        cov = a @ self.cov @ a.T + _jerk_q(dt, self.jerk_psd) + self.accel_input_var * np.outer(b, b)
        self.cov = 0.5 * (cov + cov.T)
        return self

    def correct_range(self, value: float, variance: float) -> "AltitudeFilter":
        self.state, self.cov = _scalar_update(self.state, self.cov, 0, value - self.state[0], variance)
        return self

    def correct_baro_rate(self, value: float, variance: float) -> "AltitudeFilter":
        self.state, self.cov = _scalar_update(self.state, self.cov, 1, value - self.state[1], variance)
        return self

    def copy(self) -> "AltitudeFilter":
        dup = AltitudeFilter(self.jerk_psd, self.accel_input_var)
        dup.state = self.state.copy()
        dup.cov = self.cov.copy()
        return dup


@dataclass(frozen=True)
class FusedState:
    """Snapshot of the full fused estimate."""

    timestamp: float
    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float
    heading: float
    heading_rate: float


#: Measurement kinds accepted by :meth:`PoseEstimator.process`.
KINDS = ("velocity", "position", "heading", "heading_rate", "imu_accel", "range", "baro_rate")


@dataclass
class _Entry:
    timestamp: float
    seq: int
    kind: str
    value: tuple


class PoseEstimator:
    """Owner of the four filters and the time-ordered measurement log.

    Measurements are applied at their timestamps; a measurement older
    than the current filter time triggers a rewind to the nearest
    stored snapshot and a deterministic replay of everything after it.
    """

    def __init__(self, params: FusionParams = FusionParams(), origin=(0.0, 0.0, 0.0)):
        self.params = params
        self.fx = AxisFilter(params.jerk_psd_xy, params.initial_variance, origin[0])
        self.fy = AxisFilter(params.jerk_psd_xy, params.initial_variance, origin[1])
        self.fh = HeadingFilter(params.heading_accel_psd, params.initial_variance, origin[2])
        self.fz = AltitudeFilter(params.jerk_psd_alt, params.accel_input_var, params.initial_variance)
        self.time: float | None = None
        self.held_accel = 0.0
        self._seq = 0
        self._history: list[_Entry] = []
        self._snapshots: list[tuple[float, tuple]] = []

    # -- internal time stepping -------------------------------------------------

    def _advance(self, t: float) -> None:
        if self.time is None:
            self.time = t
            return
        dt = t - self.time
        if dt > 0.0:
            self.fx.predict(dt)
            self.fy.predict(dt)
            self.fh.predict(dt)
            self.fz.predict(dt, self.held_accel)
            self.time = t

    def _apply(self, entry: _Entry) -> None:
        self._advance(entry.timestamp)
        p = self.params
        kind, value = entry.kind, entry.value
        if kind == "velocity":
            self.fx.correct_velocity(value[0], p.r_velocity)
            self.fy.correct_velocity(value[1], p.r_velocity)
        elif kind == "position":
            self.fx.correct_position(value[0], p.r_position)
            self.fy.correct_position(value[1], p.r_position)
        elif kind == "heading":
            self.fh.correct_heading(value[0], p.r_heading)
        elif kind == "heading_rate":
            self.fh.correct_rate(value[0], p.r_heading_rate)
        elif kind == "imu_accel":
            self.held_accel = value[0]
        elif kind == "range":
            self.fz.correct_range(value[0], p.r_rangefinder)
        elif kind == "baro_rate":
            self.fz.correct_baro_rate(value[0], p.r_baro_rate)
        else:
            raise ValueError(f"unknown measurement kind {kind!r}")

    def _snapshot(self) -> None:
        assert self.time is not None
        state = (
            self.fx.copy(),
            self.fy.copy(),
            self.fh.copy(),
            self.fz.copy(),
            self.held_accel,
        )
        self._snapshots.append((self.time, state))
        horizon = self.time - self.params.history_seconds
        while len(self._snapshots) > 1 and self._snapshots[1][0] < horizon:
            self._snapshots.pop(0)
        while self._history and self._history[0].timestamp < horizon:
            self._history.pop(0)

    def _restore(self, snapshot: tuple[float, tuple]) -> None:
        t, (fx, fy, fh, fz, accel) = snapshot
        self.fx, self.fy, self.fh, self.fz = fx.copy(), fy.copy(), fh.copy(), fz.copy()
        self.held_accel = accel
        self.time = t

    # -- public API ---------------------------------------------------------------

    def process(self, timestamp: float, kind: str, *value: float) -> FusedState:
        """Apply one timestamped measurement and return the fused state."""
        if kind not in KINDS:
            raise ValueError(f"unknown measurement kind {kind!r}")
        entry = _Entry(timestamp, self._seq, kind, tuple(value))
        self._seq += 1
        if self.time is None or timestamp >= self.time:
            self._history.append(entry)
            self._apply(entry)
            self._snapshot()
            return self.state()

        # Late measurement: rewind to the last snapshot at or before it,
        # splice the entry into the log and replay the tail.
        times = [t for t, _ in self._snapshots]
        idx = bisect.bisect_right(times, timestamp) - 1
        position = bisect.bisect_right(
            [(e.timestamp, e.seq) for e in self._history], (timestamp, entry.seq)
        )
        self._history.insert(position, entry)
        if idx < 0:
            log.warning(
                "measurement at t=%.3f predates the %.1f s history window; applying without rewind",
                timestamp,
                self.params.history_seconds,
            )
            stale = _Entry(self.time, entry.seq, kind, entry.value)
            self._apply(stale)
            self._snapshot()
            return self.state()

        rewind_time = times[idx]
        self._restore(self._snapshots[idx])
        self._snapshots = self._snapshots[: idx + 1]
        for pending in self._history:
            if pending.timestamp > rewind_time or (
                pending.timestamp == rewind_time and pending is entry
            ):
                self._apply(pending)
        self._snapshot()
        return self.state()

    def state(self) -> FusedState:
        return FusedState(
            timestamp=self.time if self.time is not None else 0.0,
            x=float(self.fx.state[0]),
            y=float(self.fy.state[0]),
            z=float(self.fz.state[0]),
            vx=float(self.fx.state[1]),
            vy=float(self.fy.state[1]),
            vz=float(self.fz.state[1]),
            heading=float(self.fh.state[0]),
            heading_rate=float(self.fh.state[1]),
        )
