"""2D-LIDAR localization toolkit.

Scan processing, dual-correspondence scan matching, incremental
mapping, Kalman-filter sensor fusion, a deterministic simulator and an
evaluation suite, tied together by a batch pipeline and CLI.
"""

__version__ = "0.1.0"

from .errors import LidarLocError
from .geometry import Attitude, CartesianScan, PolarPoint, PolarScan, Point3, Transform2D

__all__ = [
    "__version__",
    "LidarLocError",
    "Attitude",
    "CartesianScan",
    "PolarPoint",
    "PolarScan",
    "Point3",
    "Transform2D",
]
