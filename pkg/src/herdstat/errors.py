"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: input and fetch problems
exit with code 2, design and estimation failures with code 3.
"""


class HerdstatError(Exception):
    """Base class for all package-specific errors."""


class InputError(HerdstatError):
    """Malformed or degenerate input data (bad CSV, duplicate keys, constant series)."""


class FetchError(HerdstatError):
    """A remote price history could not be retrieved or cached."""

    def __init__(self, message: str, url: str | None = None, status: int | None = None):
        super().__init__(message)
        self.url = url
        self.status = status


class DesignError(HerdstatError):
    """A regression design cannot be built (too short, rank deficient, misaligned)."""


class EstimationError(HerdstatError):
    """An estimator failed to produce a valid fit."""
