"""Exception types shared across the package."""


class DataError(Exception):
    """Raised when an input file, directory, or array violates a contract."""


class UnsegmentableError(DataError):
    """Raised when a recording cannot be segmented into heart cycles."""
