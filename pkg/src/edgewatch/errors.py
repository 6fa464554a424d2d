"""Shared error types with CLI exit-code semantics."""


class ConfigError(Exception):
    """Invalid configuration (CLI exit code 2)."""


class InputError(Exception):
    """Fatal problem with input data (CLI exit code 1)."""
