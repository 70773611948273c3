"""Exception hierarchy.

Three families map onto CLI exit codes: configuration problems (2),
data problems (3) and numerical failures (4).
"""


class FairTargetError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(FairTargetError):
    exit_code = 2


class DataError(FairTargetError):
    exit_code = 3


class NumericalError(FairTargetError):
    exit_code = 4


# -- configuration -----------------------------------------------------------


class TargetOutOfRange(ConfigError):
    pass


class DegenerateTarget(ConfigError):
    pass


class MissingSensitive(ConfigError):
    pass


# -- data --------------------------------------------------------------------


class EmptyGroup(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class DimMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyBatch(DataError):
    pass


class EmptyReports(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyAfterFiltering(DataError):
    pass


class DegenerateSplit(DataError):
    pass


class FeatureMismatch(DataError):
    pass


# -- numerics ----------------------------------------------------------------


class NonFinite(NumericalError):
    pass
