"""Exception hierarchy shared across the localization pipeline.

Every error raised by this package derives from :class:`LidarLocError`
so callers (notably the CLI) can distinguish pipeline failures from
programming errors.
"""


class LidarLocError(Exception):
    """Base class for all errors raised by lidarloc."""


class EmptyScan(LidarLocError):
    """Scan processing removed every point; the scan cannot be matched."""


class EmptyInput(LidarLocError):
    """A correspondence search received an empty point set."""


class NoCorrespondences(LidarLocError):
    """No correspondence could be established (e.g. all angular windows empty)."""


class DegenerateGeometry(LidarLocError):
    """The rotation estimate is indeterminate for this correspondence set."""


class InvalidFraction(LidarLocError):
    """The requested inlier fraction selects zero correspondences."""


class NonPositiveDt(LidarLocError):
    """A time step that must be positive was zero or negative."""


class MatchFailed(LidarLocError):
    """Scan matching did not produce a usable transform (quality gate or hard failure).

    When a quality gate rejects an otherwise completed match, the raw
    result rides along in :attr:`result` so callers can still log the
    ungated estimate.
    """

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class MapTooSparse(LidarLocError):
    """The cropped map holds too few points to attempt global matching."""


class InsufficientOverlap(LidarLocError):
    """Two trajectories share fewer than two associated samples."""


class NoValidPoints(LidarLocError):
    """Every map point was skipped when computing the map entropy."""


class OutOfSpan(LidarLocError):
    """A trajectory was sampled outside its time span."""


class ScanLogError(LidarLocError):
    """A scan-log or trajectory file is malformed."""


class ConfigError(LidarLocError):
    """A configuration file or override is invalid."""
