"""Deterministic synthetic worlds, flights and sensors for testing.

Worlds are collections of vertical wall segments (optionally limited to
a height band) plus an optional floor plane.  A simulated scan casts
uniformly spaced rays in the tilted sensor plane, keeps the nearest
wall or floor intersection within range, then degrades the result with
Gaussian range noise, uniform-random outliers and dropouts.  Every ray
carries a ground-truth label so the scan-processing filters can be
checked point by point.

All randomness flows from a single seed through per-sensor substreams,
so identical inputs always produce identical streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfSpan
from .geometry import Attitude, PolarScan, wrap_angle

LABEL_CLEAN = "clean"
LABEL_GROUND = "ground"
LABEL_OUTLIER = "outlier"
LABEL_DROPPED = "dropped"
LABEL_OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class World:
    """Wall segments in the world frame; ``sections`` are height-limited walls."""

    walls: np.ndarray                                     # (n, 2, 2)
    sections: tuple[tuple[float, float, np.ndarray], ...] = ()
    floor_z: float | None = 0.0

    def __post_init__(self) -> None:
        walls = np.asarray(self.walls, dtype=float).reshape(-1, 2, 2)
        lengths = np.hypot(*(walls[:, 1] - walls[:, 0]).T)
        if walls.shape[0] and np.any(lengths <= 0.0):
            raise ValueError("wall segments must be non-degenerate")
        object.__setattr__(self, "walls", walls)

    def all_segments(self) -> list[tuple[float, float, np.ndarray]]:
        """Walls with their z-extent, unbounded walls as (-inf, inf)."""
        out = [(-math.inf, math.inf, self.walls)] if self.walls.shape[0] else []
        out.extend((lo, hi, np.asarray(seg, dtype=float).reshape(-1, 2, 2)) for lo, hi, seg in self.sections)
        return out


@dataclass(frozen=True)
class SensorModel:
    """Scan-rate LIDAR profile; the default mimics a small hobby sensor."""

    rate_hz: float = 5.0
    points_per_scan: int = 200
    max_range: float = 12.0
    range_noise_sigma: float = 0.0
    outlier_probability: float = 0.0
    dropout_probability: float = 0.0

    def __post_init__(self) -> None:
        if self.rate_hz <= 0.0:
            raise ValueError("rate_hz must be positive")
        for p in (self.outlier_probability, self.dropout_probability):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class AuxSensors:
    """Rates and noise of the non-LIDAR sensors in the stream."""

    imu_rate_hz: float = 50.0
    rangefinder_rate_hz: float = 20.0
    baro_rate_hz: float = 10.0
    imu_noise_sigma: float = 0.02
    rangefinder_noise_sigma: float = 0.01
    baro_noise_sigma: float = 0.02


@dataclass(frozen=True)
class TiltModel:
    """Sinusoidal roll/pitch wobble; amplitudes zero means level flight."""

    roll_amplitude: float = 0.0
    pitch_amplitude: float = 0.0
    period: float = 4.0

    def attitude_at(self, t: float) -> Attitude:
        phase = 2.0 * math.pi * t / self.period
        return Attitude(
            roll=self.roll_amplitude * math.sin(phase),
            pitch=self.pitch_amplitude * math.cos(phase),
        )


@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoints (t, x, y, z, heading) with piecewise-linear interpolation."""

    waypoints: np.ndarray
    tilt: TiltModel = TiltModel()

    def __post_init__(self) -> None:
        wp = np.asarray(self.waypoints, dtype=float).reshape(-1, 5)
        if wp.shape[0] < 2:
            raise ValueError("a trajectory needs at least two waypoints")
        if np.any(np.diff(wp[:, 0]) <= 0.0):
            raise ValueError("waypoint times must strictly increase")
        object.__setattr__(self, "waypoints", wp)

    @property
    def start_time(self) -> float:
        return float(self.waypoints[0, 0])

    @property
    def end_time(self) -> float:
        return float(self.waypoints[-1, 0])


@dataclass(frozen=True)
class TrajectorySample:
    position: np.ndarray      # (3,)
    heading: float
    velocity: np.ndarray      # (3,)
    heading_rate: float
    attitude: Attitude


def sample_trajectory(spec: TrajectorySpec, t: float) -> TrajectorySample:
    """Pose, velocity and attitude at time ``t`` (piecewise linear)."""
    wp = spec.waypoints
    if t < wp[0, 0] or t > wp[-1, 0]:
        raise OutOfSpan(f"t={t} outside trajectory span [{wp[0, 0]}, {wp[-1, 0]}]")
    leg = min(int(np.searchsorted(wp[:, 0], t, side="right")) - 1, wp.shape[0] - 2)
    t0, t1 = wp[leg, 0], wp[leg + 1, 0]
    alpha = (t - t0) / (t1 - t0)
    p0, p1 = wp[leg, 1:4], wp[leg + 1, 1:4]
    heading_step = wrap_angle(wp[leg + 1, 4] - wp[leg, 4])
    return TrajectorySample(
        position=p0 + alpha * (p1 - p0),
        heading=wrap_angle(wp[leg, 4] + alpha * heading_step),
        velocity=(p1 - p0) / (t1 - t0),
        heading_rate=heading_step / (t1 - t0),
        attitude=spec.tilt.attitude_at(t),
    )


@dataclass(frozen=True)
class RaycastResult:
    """Scan plus per-ray truth: label strings and the emitted-point mask."""

    scan: PolarScan
    labels: tuple[str, ...]
    emitted: np.ndarray

    def point_labels(self) -> tuple[str, ...]:
        return tuple(label for label, keep in zip(self.labels, self.emitted) if keep)


def _ray_wall_ranges(origin, directions, world: World, max_range: float) -> np.ndarray:
    """Nearest wall hit distance per ray (inf when none)."""
    n = directions.shape[0]
    best = np.full(n, np.inf)
    for z_lo, z_hi, segments in world.all_segments():
        if segments.shape[0] == 0:
            continue
        a = segments[:, 0]
        seg = segments[:, 1] - segments[:, 0]
        d_xy = directions[:, :2]
        denom = d_xy[:, None, 0] * seg[None, :, 1] - d_xy[:, None, 1] * seg[None, :, 0]
        rel = a[None, :, :] - origin[None, None, :2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (rel[:, :, 0] * seg[None, :, 1] - rel[:, :, 1] * seg[None, :, 0]) / denom
            u = (rel[:, :, 0] * d_xy[:, None, 1] - rel[:, :, 1] * d_xy[:, None, 0]) / denom
            z_hit = origin[2] + s * directions[:, None, 2]
        valid = (
            (np.abs(denom) > 1e-12)
            & (s > 1e-9)
            & (u >= 0.0)
            & (u <= 1.0)
            & (z_hit >= z_lo)
            & (z_hit <= z_hi)
            & (s <= max_range)
        )
        s = np.where(valid, s, np.inf)
        best = np.minimum(best, s.min(axis=1))
    return best


def raycast(
    world: World,
    position,
    heading: float,
    attitude: Attitude,
    sensor: SensorModel,
    rng: np.random.Generator | None = None,
) -> RaycastResult:
    """Simulate one revolution of the scanner from the given pose.

    Bearings are uniform over a full revolution in the (tilted) sensor
    plane; reported ranges are distances along the beam.  ``rng`` feeds
    noise, outliers and dropouts; pass ``None`` for a fixed default
    stream.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    origin = np.asarray(position, dtype=float)
    n = sensor.points_per_scan
    bearings = -math.pi + 2.0 * math.pi * np.arange(n) / n
    rot = Attitude(attitude.roll, attitude.pitch, heading).rotation_matrix()
    rays = np.column_stack([np.cos(bearings), np.sin(bearings), np.zeros(n)])
    directions = rays @ rot.T

    wall_range = _ray_wall_ranges(origin, directions, world, sensor.max_range)
    floor_range = np.full(n, np.inf)
    if world.floor_z is not None:
        dz = directions[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (world.floor_z - origin[2]) / dz
        hit = (dz < -1e-12) & (s > 1e-9) & (s <= sensor.max_range)
        floor_range[hit] = s[hit]

    ranges = np.minimum(wall_range, floor_range)
    is_ground = floor_range < wall_range
    has_return = np.isfinite(ranges)

    noise = rng.normal(0.0, sensor.range_noise_sigma, n) if sensor.range_noise_sigma > 0 else np.zeros(n)
    outlier_draw = rng.random(n)
    outlier_range = rng.uniform(0.05 * sensor.max_range, sensor.max_range, n)
    dropout_draw = rng.random(n)

    labels = np.full(n, LABEL_OUT_OF_RANGE, dtype=object)
    labels[has_return & ~is_ground] = LABEL_CLEAN
    labels[has_return & is_ground] = LABEL_GROUND

    measured = np.where(has_return, np.maximum(ranges + noise, 0.0), 0.0)
    is_outlier = has_return & (outlier_draw < sensor.outlier_probability)
    measured[is_outlier] = outlier_range[is_outlier]
    labels[is_outlier] = LABEL_OUTLIER

    dropped = has_return & (dropout_draw < sensor.dropout_probability)
    labels[dropped] = LABEL_DROPPED
    emitted = has_return & ~dropped

    scan = PolarScan(0.0, measured[emitted], bearings[emitted])
    return RaycastResult(scan=scan, labels=tuple(labels), emitted=emitted)


# -- world presets ---------------------------------------------------------------


def closed_polyline(vertices) -> np.ndarray:
    """Consecutive vertex pairs of a closed polygon as wall segments."""
    verts = np.asarray(vertices, dtype=float)
    return np.stack([verts, np.roll(verts, -1, axis=0)], axis=1)


def rectangle_walls(width: float, height: float, center=(0.0, 0.0)) -> np.ndarray:
    cx, cy = center
    hw, hh = width / 2.0, height / 2.0
    return closed_polyline(
        [(cx - hw, cy - hh), (cx + hw, cy - hh), (cx + hw, cy + hh), (cx - hw, cy + hh)]
    )


def world_room() -> World:
    """Plain 10 x 8 rectangular room."""
    return World(walls=rectangle_walls(10.0, 8.0))


def world_church() -> World:
    """Nave with side chapels and a polygonal apse, roughly 23 x 12, origin inside."""
    verts = [
        (-10.0, -4.0),
        (-4.0, -4.0),
        (-4.0, -6.0),  # south chapel 1
        (-2.0, -6.0),
        (-2.0, -4.0),
        (3.0, -4.0),
        (3.0, -6.0),   # south chapel 2
        (5.0, -6.0),
        (5.0, -4.0),
        (10.0, -4.0),
        (12.0, -2.5),  # apse
        (13.0, 0.0),
        (12.0, 2.5),
        (10.0, 4.0),
        (1.0, 4.0),
        (1.0, 6.0),    # north chapel 2
        (-1.0, 6.0),
        (-1.0, 4.0),
        (-5.0, 4.0),
        (-5.0, 6.0),   # north chapel 1
        (-7.0, 6.0),
        (-7.0, 4.0),
        (-10.0, 4.0),
    ]
    return World(walls=closed_polyline(verts))


def world_forest(seed: int = 0, extent: float = 30.0, pillars: int = 40) -> World:
    """Scattered square pillars inside a bounded clearing."""
    rng = np.random.default_rng(seed)
    segments = [rectangle_walls(extent, extent)]
    count = 0
    while count < pillars:
        x, y = rng.uniform(-extent / 2 + 1.5, extent / 2 - 1.5, 2)
        if math.hypot(x, y) < 2.0:  # keep the takeoff spot clear
            continue
        segments.append(rectangle_walls(0.35, 0.35, center=(x, y)))
        count += 1
    return World(walls=np.concatenate(segments, axis=0))


def world_tunnel() -> World:
    """Long corridor with two side niches, origin mid-tunnel."""
    verts = [
        (-15.0, -1.5),
        (-3.0, -1.5),
        (-3.0, -3.0),
        (-1.0, -3.0),
        (-1.0, -1.5),
        (15.0, -1.5),
        (15.0, 1.5),
        (7.0, 1.5),
        (7.0, 3.0),
        (5.0, 3.0),
        (5.0, 1.5),
        (-15.0, 1.5),
    ]
    return World(walls=closed_polyline(verts))


WORLD_PRESETS = {
    "room": world_room,
    "church": world_church,
    "forest": world_forest,
    "tunnel": world_tunnel,
}


def write_world(path, world: World) -> None:
    """Plain-text world: WALL / WALL3 / FLOOR records."""
    with open(path, "w") as handle:
        if world.floor_z is not None:
            handle.write(f"FLOOR {world.floor_z:.6f}\n")
        for (x1, y1), (x2, y2) in world.walls:
            handle.write(f"WALL {x1:.6f} {y1:.6f} {x2:.6f} {y2:.6f}\n")
        for z_lo, z_hi, segments in world.sections:
            for (x1, y1), (x2, y2) in segments:
                handle.write(f"WALL3 {x1:.6f} {y1:.6f} {x2:.6f} {y2:.6f} {z_lo:.6f} {z_hi:.6f}\n")


def read_world(path) -> World:
    walls = []
    sections: dict[tuple[float, float], list] = {}
    floor_z: float | None = None
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            try:
                if fields[0] == "FLOOR":
                    floor_z = float(fields[1])
                elif fields[0] == "WALL":
                    x1, y1, x2, y2 = map(float, fields[1:5])
                    walls.append(((x1, y1), (x2, y2)))
                elif fields[0] == "WALL3":
                    x1, y1, x2, y2, z_lo, z_hi = map(float, fields[1:7])
                    sections.setdefault((z_lo, z_hi), []).append(((x1, y1), (x2, y2)))
                else:
                    raise ValueError(f"unknown record {fields[0]!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad world record: {exc}") from exc
    return World(
        walls=np.array(walls, dtype=float).reshape(-1, 2, 2),
        sections=tuple((lo, hi, np.array(seg, dtype=float)) for (lo, hi), seg in sections.items()),
        floor_z=floor_z,
    )


# -- trajectory presets ------------------------------------------------------------


def hover_spec(duration: float = 10.0, position=(0.0, 0.0, 1.0), heading: float = 0.0) -> TrajectorySpec:
    x, y, z = position
    return TrajectorySpec(np.array([[0.0, x, y, z, heading], [duration, x, y, z, heading]]))


def loop_spec(
    duration: float = 60.0,
    width: float = 6.0,
    height: float = 4.0,
    altitude: float = 1.0,
    center=(0.0, 0.0),
    tilt: TiltModel = TiltModel(),
) -> TrajectorySpec:
    """Rectangular loop returning to the start pose (loop-closure substrate)."""
    cx, cy = center
    hw, hh = width / 2.0, height / 2.0
    corners = [
        (cx - hw, cy - hh, 0.0),
        (cx + hw, cy - hh, math.pi / 2),
        (cx + hw, cy + hh, math.pi),
        (cx - hw, cy + hh, 3 * math.pi / 2),
        (cx - hw, cy - hh, 2 * math.pi),
    ]
    times = np.linspace(0.0, duration, len(corners))
    waypoints = [(t, x, y, altitude, h) for t, (x, y, h) in zip(times, corners)]
    return TrajectorySpec(np.array(waypoints), tilt=tilt)


def line_spec(
    duration: float = 20.0,
    length: float = 10.0,
    altitude: float = 1.0,
    heading: float = 0.0,
) -> TrajectorySpec:
    """Straight out-and-back flight along x."""
    half = duration / 2.0
    waypoints = [
        (0.0, -length / 2.0, 0.0, altitude, heading),
        (half, length / 2.0, 0.0, altitude, heading),
        (duration, -length / 2.0, 0.0, altitude, heading),
    ]
    return TrajectorySpec(np.array(waypoints))


TRAJECTORY_PRESETS = {
    "hover": hover_spec,
    "loop": loop_spec,
    "line": line_spec,
}


# -- multiplexed sensor stream ------------------------------------------------------

#: Deterministic ordering of simultaneous messages: sensors feed the
#: filters before the scan that consumes the estimates.
KIND_PRIORITY = {"imu": 0, "range": 1, "baro": 2, "scan": 3}


@dataclass(frozen=True)
class Message:
    timestamp: float
    kind: str
    payload: object


@dataclass(frozen=True)
class SimulationRun:
    """Message stream plus the ground truth needed by the evaluation."""

    messages: tuple[Message, ...]
    truth: np.ndarray                       # (n_scans, 5): t, x, y, z, heading
    scan_truth: tuple[RaycastResult, ...]   # per-scan labels, aligned with scans
    attitudes: tuple[Attitude, ...]         # true attitude per scan
    world: World
    spec: TrajectorySpec


def _sensor_times(spec: TrajectorySpec, rate_hz: float) -> np.ndarray:
    duration = spec.end_time - spec.start_time
    count = int(math.floor(duration * rate_hz + 1e-9))
    return spec.start_time + np.arange(count) / rate_hz


def synthesize(
    world: World,
    spec: TrajectorySpec,
    lidar: SensorModel = SensorModel(),
    aux: AuxSensors = AuxSensors(),
    seed: int = 0,
) -> SimulationRun:
    """Produce the deterministic, time-ordered multi-sensor stream."""
    lidar_rng, imu_rng, range_rng, baro_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
    )

    messages: list[tuple[float, int, int, Message]] = []
    seq = 0

    def push(t: float, kind: str, payload) -> None:
        nonlocal seq
        messages.append((t, KIND_PRIORITY[kind], seq, Message(t, kind, payload)))
        seq += 1

    truth_rows = []
    scan_truth = []
    attitudes = []
    for t in _sensor_times(spec, lidar.rate_hz):
        sample = sample_trajectory(spec, float(t))
        result = raycast(world, sample.position, sample.heading, sample.attitude, lidar, lidar_rng)
        scan = PolarScan(float(t), result.scan.ranges, result.scan.bearings)
        push(float(t), "scan", scan)
        scan_truth.append(RaycastResult(scan, result.labels, result.emitted))
        attitudes.append(sample.attitude)
        truth_rows.append((t, *sample.position, sample.heading))

    for t in _sensor_times(spec, aux.imu_rate_hz):
        noise = imu_rng.normal(0.0, aux.imu_noise_sigma) if aux.imu_noise_sigma > 0 else 0.0
        push(float(t), "imu", 0.0 + noise)  # piecewise-linear flight: true z-accel is zero

    floor = world.floor_z if world.floor_z is not None else 0.0
    for t in _sensor_times(spec, aux.rangefinder_rate_hz):
        sample = sample_trajectory(spec, float(t))
        noise = range_rng.normal(0.0, aux.rangefinder_noise_sigma) if aux.rangefinder_noise_sigma > 0 else 0.0
        push(float(t), "range", sample.position[2] - floor + noise)

    for t in _sensor_times(spec, aux.baro_rate_hz):
        sample = sample_trajectory(spec, float(t))
        noise = baro_rng.normal(0.0, aux.baro_noise_sigma) if aux.baro_noise_sigma > 0 else 0.0
        push(float(t), "baro", sample.velocity[2] + noise)

    messages.sort(key=lambda item: (item[0], item[1], item[2]))
    return SimulationRun(
        messages=tuple(m for *_, m in messages),
        truth=np.array(truth_rows, dtype=float),
        scan_truth=tuple(scan_truth),
        attitudes=tuple(attitudes),
        world=world,
        spec=spec,
    )
