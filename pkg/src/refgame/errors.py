"""Shared exception types."""


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class DataFormatError(ValueError):
    """Malformed dataset file."""


class NonFiniteLossError(RuntimeError):
    """Training aborted because a loss became NaN or infinite."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
