"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates its documented constraint."""


class InvalidStateError(ValueError):
    """A physical state fails a structural check (e.g. non-unit quaternion)."""


class SimulationDiverged(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, message: str, drone_index: int | None = None):
        super().__init__(message)
        self.drone_index = drone_index


class TrainingDiverged(RuntimeError):
    """A training update produced a non-finite loss."""


class CheckpointError(RuntimeError):
    """A checkpoint file is unreadable or internally inconsistent."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrajectoryFormatError(ValueError):
    """A trajectory or metrics file does not match the documented format."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no
