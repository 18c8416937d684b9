"""Shared exception types."""


class HaybenchError(Exception):
    """Base class for all toolkit errors."""


class IngestError(HaybenchError):
    """Corpus or QA file could not be ingested (bad line, duplicate id, ...)."""


class ValidationError(HaybenchError):
    """Input passed parsing but violates a contract (unresolved needle, bad hop count)."""


class LoadError(HaybenchError):
    """A persisted binary artifact is malformed or inconsistent."""


class ClientError(HaybenchError):
    """A model or embedding endpoint failed after exhausting retries."""


class ConfigError(HaybenchError):
    """Run configuration is missing or inconsistent."""
