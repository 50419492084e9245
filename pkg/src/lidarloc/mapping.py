"""Incremental global map: a resolution-bounded point store plus a dense cloud.

The sparse layer keeps at most one point per ``resolution``-sized
neighborhood: a new point is stored only if it is at least
``resolution`` away from every point already stored nearby.  Storage is
a uniform voxel grid keyed by cell index, which serves the same role as
a fixed-depth octree (point buckets at leaf size ``resolution``) while
keeping insertion O(1); the separation test only has to look at the
3 x 3 x 3 cell neighborhood because the resolution equals the cell
edge.  Snapshots expose occupied-cell centers; the dense layer simply
accumulates every aligned point for end users.
"""

from __future__ import annotations

import struct

import numpy as np

from .geometry import CartesianScan, Transform2D

MAP_MAGIC = b"LLM1"
MAP_VERSION = 1


class GlobalMap:
    """Single-writer map; readers use :meth:`snapshot` copies."""

    def __init__(self, resolution: float = 0.2, dense_cap: int = 5_000_000):
        if resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if dense_cap < 1:
            raise ValueError("dense_cap must be positive")
        self.resolution = float(resolution)
        self.dense_cap = int(dense_cap)
        self._cells: dict[tuple[int, int, int], list[np.ndarray]] = {}
        self._dense: list[np.ndarray] = []
        self._dense_stride = 1
        self._dense_counter = 0
        self.last_update_position: tuple[float, float] | None = None

    def __len__(self) -> int:
        return sum(len(points) for points in self._cells.values())

    def _cell_of(self, point: np.ndarray) -> tuple[int, int, int]:
        return tuple(np.floor(point / self.resolution).astype(int))

    def _is_separated(self, point: np.ndarray) -> bool:
        cx, cy, cz = self._cell_of(point)
        r_sq = self.resolution**2
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = self._cells.get((cx + dx, cy + dy, cz + dz))
                    if not bucket:
                        continue
                    for stored in bucket:
                        delta = stored - point
                        if float(delta @ delta) < r_sq:
                            return False
        return True

    def insert_scan(self, scan: CartesianScan, pose: Transform2D) -> int:
        """Align the scan by ``pose`` and integrate it; returns new sparse points.

        Every transformed point is appended to the dense cloud; only
        points at least ``resolution`` away from all stored neighbors
        enter the sparse layer.
        """
        world = pose.apply(scan.points)
        added = 0
        for point in world:
            self._append_dense(point)
            if self._is_separated(point):
                self._cells.setdefault(self._cell_of(point), []).append(point)
                added += 1
        return added

    def insert_points(self, points: np.ndarray) -> int:
        """Integrate pre-aligned world points (map preloading)."""
        return self.insert_scan(CartesianScan(0.0, points), Transform2D.identity())

    def _append_dense(self, point: np.ndarray) -> None:
        self._dense_counter += 1
        if (self._dense_counter - 1) % self._dense_stride != 0:
            return
        self._dense.append(point)
        if len(self._dense) > self.dense_cap:
            # uniform thinning keeps the cloud bounded
            self._dense = self._dense[::2]
            self._dense_stride *= 2

    def snapshot(self) -> np.ndarray:
        """Occupied-cell centers as an immutable ``(n, 3)`` copy."""
        if not self._cells:
            return np.empty((0, 3))
        centers = (np.array(list(self._cells.keys()), dtype=float) + 0.5) * self.resolution
        centers.flags.writeable = False
        return centers

    def export_dense(self) -> np.ndarray:
        """Dense cloud in insertion order, ``(n, 3)``."""
        if not self._dense:
            return np.empty((0, 3))
        return np.array(self._dense)

    def export_sparse_points(self) -> np.ndarray:
        """The stored (raw, non-quantized) sparse points."""
        if not self._cells:
            return np.empty((0, 3))
        return np.array([p for bucket in self._cells.values() for p in bucket])


def write_map_ascii(path, points: np.ndarray) -> None:
    """One ``x y z`` triple per line, meters, six decimals."""
    with open(path, "w") as handle:
        for x, y, z in np.asarray(points, dtype=float).reshape(-1, 3):
            handle.write(f"{x:.6f} {y:.6f} {z:.6f}\n")


def read_map_ascii(path) -> np.ndarray:
    points = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            x, y, z = (float(v) for v in line.split())
            points.append((x, y, z))
    return np.array(points, dtype=float).reshape(-1, 3)


def write_map_binary(path, points: np.ndarray) -> None:
    """16-byte header (magic, version, count) then little-endian f32 triples."""
    pts = np.asarray(points, dtype="<f4").reshape(-1, 3)
    with open(path, "wb") as handle:
        handle.write(struct.pack("<4sIQ", MAP_MAGIC, MAP_VERSION, pts.shape[0]))
        handle.write(pts.tobytes())


def read_map_binary(path) -> np.ndarray:
    with open(path, "rb") as handle:
        magic, version, count = struct.unpack("<4sIQ", handle.read(16))
        if magic != MAP_MAGIC:
            raise ValueError(f"not a map file: bad magic {magic!r}")
        if version != MAP_VERSION:
            raise ValueError(f"unsupported map version {version}")
        data = np.frombuffer(handle.read(count * 12), dtype="<f4")
    return data.reshape(count, 3).astype(float)
