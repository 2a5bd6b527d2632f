"""Exception types shared across the package.

The CLI maps these onto exit codes: DataFormatError -> 2, NumericError -> 3.
Plain ValueError covers parameter-domain violations.
"""


class DataFormatError(ValueError):
    """Raised when an input file cannot be parsed into a valid dataset."""


class NumericError(RuntimeError):
    """Raised when a numeric routine cannot produce a trustworthy result.

    Examples: an allocation table whose every cell underflows, or a series
    truncation that hits its hard cap before the tail bound is met.
    """
