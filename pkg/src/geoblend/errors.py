"""Exception hierarchy mapped to CLI exit codes (usage=1, data=2, numeric=3)."""


class GeoblendError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class UsageError(GeoblendError):
    """Bad flags, unknown model/group keys, malformed selections."""

    exit_code = 1


class DataError(GeoblendError):
    """Unreadable or structurally invalid input data."""

    exit_code = 2


class NumericalError(GeoblendError):
    """Hard numerical failure: singular systems, divergence, invalid variance."""

    exit_code = 3
