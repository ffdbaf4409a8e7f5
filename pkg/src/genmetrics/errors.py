"""Exception and warning types shared across the engine.

The hierarchy mirrors the CLI exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""

from __future__ import annotations


class GenMetricsError(Exception):
    """Base class for all engine errors."""


class ConfigError(GenMetricsError):
    """Invalid run configuration (bad JSON, unknown keys, bad flag values)."""


class DataError(GenMetricsError):
    """Malformed or inconsistent input data."""


class NumericalError(GenMetricsError):
    """A numerical routine failed or was handed unusable values."""


# --- manifest / file format ------------------------------------------------

class MissingColumnError(DataError):
    def __init__(self, column: str):
        super().__init__(f"required column missing: {column!r}")
        self.column = column


class DuplicateSampleIdError(DataError):
    def __init__(self, sample_id: str):
        super().__init__(f"duplicate sample id: {sample_id!r}")
        self.sample_id = sample_id


class BadLabelValueError(DataError):
    def __init__(self, column: str, value: str, row: int):
        super().__init__(f"label column {column!r} has non-binary value {value!r} at data row {row}")
        self.column = column
        self.value = value
        self.row = row


class BadSplitValueError(DataError):
    def __init__(self, value: str, row: int):
        super().__init__(f"split must be train/test/synthetic, got {value!r} at data row {row}")
        self.value = value
        self.row = row


class BadMagicError(DataError):
    pass


class VersionUnsupportedError(DataError):
    pass


class TruncatedFileError(DataError):
    pass


class IdCountMismatchError(DataError):
    pass


class DecodeFailureError(DataError):
    pass


class ZeroDimensionError(DataError):
    pass


class IoFailureError(DataError):
    pass


# --- numerics ---------------------------------------------------------------

class TooFewSamplesError(NumericalError):
    pass


class TooFewPointsError(NumericalError):
    pass


class NonFiniteInputError(NumericalError):
    pass


class NonFiniteValueError(NumericalError):
    pass


class DimensionMismatchError(NumericalError):
    pass


class ShapeMismatchError(NumericalError):
    pass


class SqrtFailureError(NumericalError):
    pass


class SubsetTooLargeError(NumericalError):
    pass


class ZeroVectorError(NumericalError):
    pass


class LengthMismatchError(NumericalError):
    pass


class ZeroVarianceError(NumericalError):
    pass


class EmptyInputError(DataError):
    pass


class IdAlignmentError(DataError):
    def __init__(self, missing_id: str, where: str):
        super().__init__(f"manifest id {missing_id!r} not present in {where}")
        self.missing_id = missing_id
        self.where = where


# --- warnings ---------------------------------------------------------------

class ShortGroupWarning(UserWarning):
    """A prompt group holds fewer seed generations than the protocol expects."""


class ValidationWarning(UserWarning):
    """Soft schema issue found by `validate`; data remains usable."""
