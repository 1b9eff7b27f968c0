"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: DataError/FormatError -> 2,
NumericsError -> 3.
"""


class SepqeError(Exception):
    """Base class for all toolkit errors."""


class DataError(SepqeError):
    """Invalid inputs, violated invariants, or failed validation."""


class FormatError(DataError):
    """Corrupt or unrecognized on-disk payload (WAV, RFQF, checkpoint)."""


class NumericsError(SepqeError):
    """Non-finite values where finite math was required (e.g. NaN loss)."""
