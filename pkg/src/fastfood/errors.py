"""Exception types shared across the library."""


class ConfigError(ValueError):
    """Invalid experiment configuration. The message names the offending field."""


class FormatError(Exception):
    """Malformed binary input: a bad IDX file or a corrupt checkpoint."""


class StateError(RuntimeError):
    """An operation was run against missing or inconsistent cached state."""
