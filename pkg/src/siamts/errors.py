"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes (config=2, data=3, numeric=4).
"""


class SiamTSError(Exception):
    """Base class for all package errors."""


class ConfigError(SiamTSError):
    """Invalid or inconsistent run configuration."""


class DataError(SiamTSError):
    """Corpus ingestion or split construction failure."""


class NumericError(SiamTSError):
    """Numerical failure: NaN loss/gradient, degenerate embedding, gradcheck failure."""


class ShapeError(SiamTSError):
    """Tensor shape mismatch at an operation, with the op named in the message."""
