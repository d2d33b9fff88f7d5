"""Typed errors raised across the pipeline.

Every error carries its class name so the CLI can report it verbatim.
"""


class P2PRiskError(Exception):
    """Base class for all package errors."""


class DataError(P2PRiskError):
    """Problems with the input data (exit code 2 at the CLI)."""


class ConfigError(P2PRiskError):
    """Invalid configuration or usage (exit code 1 at the CLI)."""


class EmptyClass(DataError):
    pass


class UnknownColumn(DataError):
    pass


class IndexOutOfRange(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class NoTerminalLoans(DataError):
    pass


class EmptyResult(DataError):
    pass


class ConstantColumn(DataError):
    pass


class NonPositiveValue(DataError):
    pass


class NonPositiveIncome(DataError):
    pass


class NonPositiveInstallment(DataError):
    pass


class TooFewSamples(DataError):
    pass


class EmptyPointSet(DataError):
    pass


class KTooLarge(DataError):
    pass


class MinorityTooSmall(DataError):
    pass


class DegenerateData(DataError):
    pass


class SingularCovariance(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class UndefinedMetric(DataError):
    pass


class OneClassOnly(DataError):
    pass


class InvalidSpec(ConfigError):
    pass
