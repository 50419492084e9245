"""Scan-log and trajectory file formats.

A scan log is line-delimited text, one record per sensor message, six
decimal places throughout::

    SCAN t=<s> n=<count> <bearing:range> <bearing:range> ...
    IMU t=<s> az=<m/s2>
    RANGE t=<s> h=<m>
    BARO t=<s> vz=<m/s>

Record timestamps must be non-decreasing.  Trajectory files are CSV
with the header ``timestamp,x,y,z,heading``.
"""

from __future__ import annotations

import numpy as np

from .errors import ScanLogError
from .geometry import PolarScan
from .simulator import Message

TRAJECTORY_HEADER = "timestamp,x,y,z,heading"


def write_scanlog(path, messages) -> None:
    with open(path, "w") as handle:
        for msg in messages:
            if msg.kind == "scan":
                scan: PolarScan = msg.payload
                pairs = " ".join(
                    f"{b:.6f}:{r:.6f}" for b, r in zip(scan.bearings, scan.ranges)
                )
                line = f"SCAN t={msg.timestamp:.6f} n={len(scan)}"
                handle.write(f"{line} {pairs}\n" if pairs else f"{line}\n")
            elif msg.kind == "imu":
                handle.write(f"IMU t={msg.timestamp:.6f} az={msg.payload:.6f}\n")
            elif msg.kind == "range":
                handle.write(f"RANGE t={msg.timestamp:.6f} h={msg.payload:.6f}\n")
            elif msg.kind == "baro":
                handle.write(f"BARO t={msg.timestamp:.6f} vz={msg.payload:.6f}\n")
            else:
                raise ScanLogError(f"cannot serialize message kind {msg.kind!r}")


def _field(token: str, name: str, lineno: int) -> float:
    prefix = name + "="
    if not token.startswith(prefix):
        raise ScanLogError(f"line {lineno}: expected {name}=<value>, got {token!r}")
    try:
        return float(token[len(prefix):])
    except ValueError as exc:
        raise ScanLogError(f"line {lineno}: bad {name} value {token!r}") from exc


def read_scanlog(path) -> list[Message]:
    """Parse a scan log; malformed or out-of-order records abort with the line number."""
    messages: list[Message] = []
    last_t = -np.inf
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            kind = tokens[0]
            if kind == "SCAN":
                t = _field(tokens[1], "t", lineno)
                count = int(_field(tokens[2], "n", lineno))
                pairs = tokens[3:]
                if len(pairs) != count:
                    raise ScanLogError(
                        f"line {lineno}: SCAN announces {count} points but carries {len(pairs)}"
                    )
                try:
                    bearings, ranges = (
                        np.array(values, dtype=float)
                        for values in zip(*(pair.split(":") for pair in pairs))
                    ) if pairs else (np.empty(0), np.empty(0))
                except ValueError as exc:
                    raise ScanLogError(f"line {lineno}: bad bearing:range pair") from exc
                message = Message(t, "scan", PolarScan(t, ranges, bearings))
            elif kind == "IMU":
                t = _field(tokens[1], "t", lineno)
                message = Message(t, "imu", _field(tokens[2], "az", lineno))
            elif kind == "RANGE":
                t = _field(tokens[1], "t", lineno)
                message = Message(t, "range", _field(tokens[2], "h", lineno))
            elif kind == "BARO":
                t = _field(tokens[1], "t", lineno)
                message = Message(t, "baro", _field(tokens[2], "vz", lineno))
            else:
                raise ScanLogError(f"line {lineno}: unknown record type {kind!r}")
            if message.timestamp < last_t:
                raise ScanLogError(
                    f"line {lineno}: out-of-order timestamp {message.timestamp:.6f} "
                    f"after {last_t:.6f}"
                )
            last_t = message.timestamp
            messages.append(message)
    return messages


def write_trajectory_csv(path, rows) -> None:
    """Rows of (timestamp, x, y, z, heading), fixed six decimals."""
    with open(path, "w") as handle:
        handle.write(TRAJECTORY_HEADER + "\n")
        for t, x, y, z, heading in np.asarray(rows, dtype=float).reshape(-1, 5):
            handle.write(f"{t:.6f},{x:.6f},{y:.6f},{z:.6f},{heading:.6f}\n")


def read_trajectory_csv(path) -> np.ndarray:
    """Full (n, 5) array of timestamp, x, y, z, heading."""
    with open(path) as handle:
        header = handle.readline().strip()
        if header != TRAJECTORY_HEADER:
            raise ScanLogError(f"{path}: expected header {TRAJECTORY_HEADER!r}, got {header!r}")
        rows = []
        for lineno, line in enumerate(handle, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 5:
                raise ScanLogError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
            try:
                rows.append([float(v) for v in fields])
            except ValueError as exc:
                raise ScanLogError(f"{path}:{lineno}: bad number") from exc
    return np.array(rows, dtype=float).reshape(-1, 5)
