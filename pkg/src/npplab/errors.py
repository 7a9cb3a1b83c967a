"""Shared exception types, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid configuration or flag value (CLI exit code 2)."""
