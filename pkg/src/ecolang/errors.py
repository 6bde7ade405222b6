"""Exception types shared across the toolkit."""


class EcolangError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(EcolangError):
    """Invalid configuration, usage, or missing input file."""


class DomainError(EcolangError):
    """An operation's precondition was violated."""


class ParseError(EcolangError):
    """A data file or model output could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.line = line


class TransportError(EcolangError):
    """A backend request failed after exhausting retries."""


class JudgeFailure(EcolangError):
    """The judge produced unparseable output twice in a row."""


class NotEmbeddable(EcolangError):
    """A word has no embedding in the store."""
