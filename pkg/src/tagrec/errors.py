"""Exception types shared across the package."""


class TagrecError(Exception):
    """Base class for all package-specific errors."""


class CorpusFormatError(TagrecError):
    """A corpus/graph/groups/query file failed validation; message names the line."""


class ConfigError(TagrecError):
    """Invalid parameter combination (bad minsup, missing required input, ...)."""


class EmptyDatabaseError(TagrecError):
    """An operation that needs at least one transaction got an empty database."""


class UncoverableTagError(TagrecError):
    """A transaction contains a tag with no singleton in the code table."""


class InvalidQueryError(TagrecError):
    """A recommendation query is malformed (e.g. empty input tagset)."""
