"""Exception hierarchy shared across the package."""

from __future__ import annotations


class TtsqlError(Exception):
    """Base class for all package errors."""


# -- database / catalog ------------------------------------------------------

class UnreadableDatabase(TtsqlError):
    """The database file is missing, not SQLite, or otherwise unreadable."""


class EmptyDatabase(TtsqlError):
    """The database contains zero user tables."""


# -- retrieval ---------------------------------------------------------------

class EmptyText(TtsqlError):
    """Embedding was requested for an empty string."""


class ProviderUnavailable(TtsqlError):
    """A remote embedding provider could not be reached."""


class EmptyIndex(TtsqlError):
    """A query was issued against a vector index with no entries."""


class DuplicateCellRecord(TtsqlError):
    """Two cell records share the same (table, column, value) key."""


# -- gateway -----------------------------------------------------------------

class BackendError(TtsqlError):
    """A model backend failed after exhausting its retries."""


class BackendTimeout(BackendError):
    """A model backend timed out."""


class UnscriptedMockCall(BackendError):
    """The mock backend received a request it has no script entry for."""


class MissingPlaceholder(TtsqlError):
    """A prompt template placeholder was absent from the render context."""


class SqlNotFound(TtsqlError):
    """No SQL statement could be extracted from a model response."""


# -- generation / selection --------------------------------------------------

class AllVariantsFailed(TtsqlError):
    """Every generation variant failed to produce parseable SQL."""


class EmptyPool(TtsqlError):
    """An operation required a non-empty candidate pool."""


# -- metrics / evaluation ----------------------------------------------------

class GoldExecutionFailed(TtsqlError):
    """A gold SQL query failed to execute (configuration error)."""


class QueryTimeout(TtsqlError):
    """A timed query run exceeded its timeout."""


class KTooLarge(TtsqlError):
    """pass@k requested with k outside [1, pool size]."""


# -- pipeline ----------------------------------------------------------------

class MissingDatabase(TtsqlError):
    """A dataset record references a database that does not exist on disk."""


class MalformedRecord(TtsqlError):
    """A dataset record is missing required fields."""


class ConfigError(TtsqlError):
    """The run configuration is invalid."""
