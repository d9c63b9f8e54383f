"""Exception types shared across the package.

ConfigError maps to CLI exit code 2 (usage/config mistakes), everything else
to exit code 1 (runtime/data failures).
"""


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


class DatasetError(RuntimeError):
    """Unreadable, missing, or inconsistent dataset content."""


class TrackingDivergence(RuntimeError):
    """The tracker failed to converge; the message names the condition."""


class PlyError(ValueError):
    """Malformed PLY file; includes the offending header line when known."""


class PipelineError(RuntimeError):
    """A pipeline stage failed; carries the stage name and frame index."""

    def __init__(self, stage: str, frame_index, cause: BaseException):
        super().__init__(f"{stage} stage failed at frame {frame_index}: {cause}")
        self.stage = stage
        self.frame_index = frame_index
        self.cause = cause
