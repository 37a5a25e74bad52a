class TrailforgeError(Exception):
    """Base class for pipeline failures."""


class DeshakeError(TrailforgeError, ValueError):
    """Offset measurement failed for a frame pair."""

    def __init__(self, message, frame=None):
        self.frame = frame
        if frame is not None:
            message = f"{message} (frame {frame})"
        super().__init__(message)


class ConfigError(TrailforgeError, ValueError):
    pass


class FrameIOError(TrailforgeError, OSError):
    pass


class StageError(TrailforgeError):
    def __init__(self, stage, message, frame=None):
        self.stage = stage
        self.frame = frame
        where = f" at frame {frame}" if frame is not None else ""
        super().__init__(f"{stage}{where}: {message}")
