"""Exception hierarchy.

Each top-level class carries the process exit code the command line maps it to.
"""


class ObstacleWatchError(Exception):
    exit_code = 1


class ConfigError(ObstacleWatchError, ValueError):
    """Invalid configuration (band outside Nyquist, non-positive durations, ...)."""

    exit_code = 2


class InputError(ObstacleWatchError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class SceneError(InputError):
    """Scene or trajectory description that cannot be rendered."""


class FrameRejected(InputError):
    """No usable direct-path arrival; the caller skips this ping."""


class GeometryInfeasible(InputError):
    """Distances that do not form a valid triangle or rim geometry."""


class BodyGapUnavailable(InputError):
    """No body reflection found behind the direct arrival on the bottom microphone."""


class IOFailure(ObstacleWatchError, OSError):
    exit_code = 4
