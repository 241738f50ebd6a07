"""Exception hierarchy. Each family maps onto a stable CLI exit code."""


class TrifuseError(Exception):
    exit_code = 1


class UsageError(TrifuseError):
    """Bad arguments, wrong strategy for an operation, misuse of a tape."""

    exit_code = 1


class ConfigError(UsageError):
    pass


class DimensionError(UsageError, ValueError):
    pass


class DataError(TrifuseError):
    """Malformed or inconsistent input data (manifests, payloads, feature files)."""

    exit_code = 2


class NonFiniteError(DataError, FloatingPointError):
    pass


class AdapterError(TrifuseError):
    """External captioner failed. Carries the chunk index and captions gathered so far."""

    exit_code = 3

    def __init__(self, message, chunk_index=None, captions=()):
        super().__init__(message)
        self.chunk_index = chunk_index
        self.captions = list(captions)
