"""Exception types shared across the package.

Each carries the CLI exit code it maps to.
"""


class TiltMarlError(Exception):
    exit_code = 1


class ConfigError(TiltMarlError, ValueError):
    exit_code = 2


class ArtifactIOError(TiltMarlError, OSError):
    exit_code = 3


class DivergenceError(TiltMarlError, FloatingPointError):
    """Non-finite loss, KPI or reward."""

    exit_code = 4


class CheckpointError(ArtifactIOError):
    pass


class NotReady(TiltMarlError):
    """Replay buffer holds fewer samples than the requested batch."""
