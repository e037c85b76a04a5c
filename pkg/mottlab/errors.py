"""
Exception hierarchy for mottlab.

Every error carries the process exit code the command-line surface reports for it.
"""


class MottlabError(Exception):
    """Base class for all mottlab errors."""

    exit_code = 1


class UsageError(MottlabError):
    """Bad flags or missing required inputs."""

    exit_code = 2


class ConfigError(UsageError):
    """Invalid or unreadable JSON configuration."""


class DataError(MottlabError, ValueError):
    """Malformed input data (CSV rows, empty data sets)."""

    exit_code = 3


class NumericalError(MottlabError):
    """A computation has no finite or well-defined answer."""

    exit_code = 4


class DomainError(NumericalError, ValueError):
    """An argument lies outside the domain of a model formula."""
