"""Exception types shared across the toolkit."""

from __future__ import annotations


class ActionItemsError(Exception):
    """Base class for all toolkit errors."""


class TranscriptParseError(ActionItemsError):
    """A transcript file line could not be parsed."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class SchemaValidationError(ActionItemsError):
    """A record violates a data-model invariant."""

    def __init__(self, message: str, meeting_id: str | None = None, field: str | None = None):
        self.meeting_id = meeting_id
        self.field = field
        parts = []
        if meeting_id is not None:
            parts.append(f"meeting {meeting_id!r}")
        if field is not None:
            parts.append(f"field {field!r}")
        if parts:
            message = f"{', '.join(parts)}: {message}"
        super().__init__(message)


class LayerCompatibilityError(ActionItemsError):
    """Two parameter sets are not architecture-compatible."""

    def __init__(self, message: str, layers: tuple[str, ...] = ()):
        self.layers = layers
        if layers:
            message = f"{message}: {', '.join(layers)}"
        super().__init__(message)


class TrainingDivergedError(ActionItemsError):
    """Training produced a non-finite loss."""


class ConfigError(ActionItemsError):
    """Invalid CLI option or experiment config value."""
