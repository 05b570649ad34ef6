"""Exception hierarchy and process exit codes."""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_DATA_ERROR = 3
EXIT_BACKEND_ERROR = 4


class MieqaError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MieqaError):
    """Bad configuration: unknown schema, invalid method/task combination, template problems."""

    exit_code = EXIT_CONFIG_ERROR


class TemplateError(ConfigError):
    """Template asset missing, checksum mismatch, or unbound placeholder at render time."""


class DataError(MieqaError):
    """Malformed or inconsistent datasets, predictions, or split inputs."""

    exit_code = EXIT_DATA_ERROR


class BackendError(MieqaError):
    """Transient backend failure (retryable transport errors, 5xx, 429)."""

    exit_code = EXIT_BACKEND_ERROR


class BackendExhaustedError(BackendError):
    """All retry attempts failed; the affected instance is marked errored."""


class BackendFatalError(BackendError):
    """Non-retryable backend failure: authentication, exhausted retries."""


class UnsupportedModalityError(BackendFatalError):
    """Raised before any call when a task needs a modality the backend lacks."""
