"""Shared exception base so the CLI can map pipeline failures to one exit code."""


class SkelgenError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SkelgenError):
    """Bad configuration file, flag combination, or mismatched artifacts."""
