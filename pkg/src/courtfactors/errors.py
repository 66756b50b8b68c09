"""Exception hierarchy shared across the package."""


class CourtFactorsError(Exception):
    """Base class for all package errors."""


class UsageError(CourtFactorsError):
    """Caller passed invalid arguments, shapes, or modes."""


class DataError(CourtFactorsError):
    """Input files or records are malformed beyond recovery."""


class KernelError(CourtFactorsError):
    """A numerical kernel violated one of its own guarantees."""
