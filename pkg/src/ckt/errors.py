"""Exception types shared across the toolkit."""


class CktError(Exception):
    """Base class for all toolkit errors."""


class FormatError(CktError):
    """Malformed input stream or file; carries a location when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConflictError(CktError):
    """Two records claim the same identity with different content."""


class ConfigError(CktError):
    """Invalid configuration (weights, ontology, templates, manifest)."""


class QueryError(CktError):
    """Query text could not be parsed; carries the character offset."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class NotFoundError(CktError):
    """A referenced node, template, or slot does not exist."""


class SlotError(CktError):
    """A template argument is missing or has the wrong type."""


class DomainError(CktError):
    """Operation applied to an entity of the wrong kind."""
