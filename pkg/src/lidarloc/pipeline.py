"""End-to-end localization over a recorded or simulated message stream.

Per scan: clean the raw scan, match it against the previous one for a
velocity correction, and on one-second ticks match it against the
global map for an absolute pose correction plus a travel-gated map
insertion.  IMU, rangefinder and barometric messages feed the altitude
channel.  Errors of a single scan are contained and counted; the
stream-level contract is that identical input and configuration yield
identical outputs (scheduling uses stream time, never the wall clock).

Everything runs serialized in stream order, which is the reference
execution for determinism; stages communicate only through immutable
messages and map snapshots, so a two-lane deployment can reuse them
unchanged.
"""

from __future__ import annotations

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import globalmatch, odometry
from .config import PipelineConfig
from .errors import EmptyScan, LidarLocError, MapTooSparse, MatchFailed, NoCorrespondences, NonPositiveDt
from .fusion import FusedState, PoseEstimator
from .geometry import Attitude, CartesianScan, PolarScan, Transform2D
from .mapping import GlobalMap, read_map_ascii
from .processing import ProcessingContext, process

log = logging.getLogger(__name__)

#: Matching failures contained per scan instead of aborting the stream.
_SCAN_ERRORS = (MatchFailed, NoCorrespondences, NonPositiveDt)


@dataclass
class PipelineResult:
    """Artifacts of one run: fused states, trajectories, map, accounting."""

    fused_states: list[FusedState] = field(default_factory=list)
    sequential_rows: list[tuple[float, float, float, float]] = field(default_factory=list)
    global_rows: list[tuple[float, float, float, float]] = field(default_factory=list)
    map: GlobalMap | None = None
    summary: Counter = field(default_factory=Counter)

    def fused_trajectory_rows(self) -> np.ndarray:
        """(t, x, y, z, heading) rows, one per distinct timestamp (last wins)."""
        deduped: dict[float, FusedState] = {}
        for state in self.fused_states:
            deduped[state.timestamp] = state
        return np.array(
            [(s.timestamp, s.x, s.y, s.z, s.heading) for s in deduped.values()],
            dtype=float,
        ).reshape(-1, 5)


class Pipeline:
    """Mutable run state; use :func:`run` unless driving scans manually."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.estimator = PoseEstimator(cfg.fusion, origin=cfg.origin)
        self.map = GlobalMap(cfg.map_resolution, cfg.dense_cap)
        if cfg.preload_map:
            self.map.insert_points(read_map_ascii(cfg.preload_map))
            self.map.last_update_position = (cfg.origin[0], cfg.origin[1])
        self.seq_pose = Transform2D(cfg.origin[2], cfg.origin[0], cfg.origin[1])
        self.prev_scan: CartesianScan | None = None
        self.bootstrapped = len(self.map) > 0
        self.next_tick: float | None = None
        self.result = PipelineResult(map=self.map)

    # -- message handlers ---------------------------------------------------------

    def handle(self, message) -> FusedState:
        if message.kind == "imu":
            self.estimator.process(message.timestamp, "imu_accel", message.payload)
        elif message.kind == "range":
            self.estimator.process(message.timestamp, "range", message.payload)
        elif message.kind == "baro":
            self.estimator.process(message.timestamp, "baro_rate", message.payload)
        elif message.kind == "scan":
            self._handle_scan(message.payload)
        else:
            raise LidarLocError(f"stream carries unknown message kind {message.kind!r}")
        state = self.estimator.state()
        self.result.fused_states.append(state)
        return state

    def _processing_context(self) -> ProcessingContext:
        cfg = self.cfg
        state = self.estimator.state()
        return ProcessingContext(
            uav_radius=cfg.uav_radius,
            ground_threshold=cfg.ground_threshold,
            altitude=state.z,
            attitude=Attitude(),  # stream carries no attitude; simulator default is level
            flight_area=cfg.flight_area,
            last_position=(state.x, state.y),
            noise_radius=cfg.noise_radius,
            noise_min_neighbors=cfg.noise_min_neighbors,
            noise_filter_enabled=cfg.noise_filter,
        )

    def _handle_scan(self, raw: PolarScan) -> None:
        cfg, result = self.cfg, self.result
        result.summary["scans_total"] += 1
        started = time.perf_counter()
        t = raw.timestamp
        if self.next_tick is None:
            self.next_tick = math.floor(t) + 1.0

        try:
            scan = process(raw, self._processing_context())
        except EmptyScan:
            result.summary["scans_skipped_empty"] += 1
            return

        if not self.bootstrapped:
            origin_pose = Transform2D(cfg.origin[2], cfg.origin[0], cfg.origin[1])
            self.map.insert_scan(scan, origin_pose)
            self.map.last_update_position = (origin_pose.tx, origin_pose.ty)
            self.bootstrapped = True

        self._sequential_step(scan)
        self.prev_scan = scan

        if t >= self.next_tick - 1e-9:
            self.next_tick = math.floor(t) + 1.0
            self._global_step(scan)

        result.summary["scans_processed"] += 1
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        if elapsed_ms > 2.0 * cfg.sequential.time_budget_ms:
            log.warning("scan at t=%.3f took %.1f ms to handle", t, elapsed_ms)

    def _sequential_step(self, scan: CartesianScan) -> None:
        result = self.result
        if self.prev_scan is None:
            result.sequential_rows.append(
                (scan.timestamp, self.seq_pose.tx, self.seq_pose.ty, self.seq_pose.rotation)
            )
            return
        transform = None
        try:
            meas, match_result = odometry.step(
                self.prev_scan, scan, self.cfg.sequential, self.cfg.odometry_quality_gate
            )
            transform = match_result.transform
            result.summary[f"seq_stop_{match_result.termination_reason}"] += 1
            heading = self.estimator.state().heading
            c, s = math.cos(heading), math.sin(heading)
            self.estimator.process(
                scan.timestamp, "velocity", c * meas.vx - s * meas.vy, s * meas.vx + c * meas.vy
            )
            self.estimator.process(scan.timestamp, "heading_rate", meas.yaw_rate)
        except _SCAN_ERRORS as exc:
            result.summary["seq_rejected"] += 1
            log.debug("sequential match rejected at t=%.3f: %s", scan.timestamp, exc)
            if isinstance(exc, MatchFailed) and exc.result is not None:
                transform = exc.result.transform  # gated estimate still integrates
        if transform is not None:
            self.seq_pose = self.seq_pose.compose(transform)
        result.sequential_rows.append(
            (scan.timestamp, self.seq_pose.tx, self.seq_pose.ty, self.seq_pose.rotation)
        )

    def _global_step(self, scan: CartesianScan) -> None:
        cfg, result = self.cfg, self.result
        fused = self.estimator.state()
        prior = Transform2D(fused.heading, fused.x, fused.y)
        snapshot = self.map.snapshot()
        insert_pose = prior
        try:
            meas, match_result = globalmatch.localize(
                scan, snapshot, prior, fused.z, cfg.global_params, cfg.global_matching
            )
            result.summary[f"global_stop_{match_result.termination_reason}"] += 1
            result.global_rows.append((meas.timestamp, meas.x, meas.y, meas.heading))
            self.estimator.process(scan.timestamp, "position", meas.x, meas.y)
            self.estimator.process(scan.timestamp, "heading", meas.heading)
            insert_pose = Transform2D(meas.heading, meas.x, meas.y)
        except MapTooSparse as exc:
            result.summary["global_map_too_sparse"] += 1
            log.debug("global match skipped at t=%.3f: %s", scan.timestamp, exc)
        except _SCAN_ERRORS as exc:
            result.summary["global_rejected"] += 1
            log.debug("global match rejected at t=%.3f: %s", scan.timestamp, exc)
            if isinstance(exc, MatchFailed) and exc.result is not None:
                meas, _ = exc.result
                result.global_rows.append((meas.timestamp, meas.x, meas.y, meas.heading))

        position = (insert_pose.tx, insert_pose.ty)
        if globalmatch.should_update_map(
            position, self.map.last_update_position, cfg.global_params.update_distance
        ):
            self.map.insert_scan(scan, insert_pose)
            self.map.last_update_position = position
            result.summary["map_updates"] += 1


def run(messages, cfg: PipelineConfig) -> PipelineResult:
    """Consume a time-ordered message stream and localize throughout it."""
    pipeline = Pipeline(cfg)
    for message in messages:
        pipeline.handle(message)
    return pipeline.result
