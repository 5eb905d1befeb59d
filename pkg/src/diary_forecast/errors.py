"""Exception hierarchy.

Every error raised by the library derives from :class:`DiaryForecastError`.
The ``exit_code`` attribute is what the CLI returns when the error escapes.
"""


class DiaryForecastError(Exception):
    exit_code = 1


class UsageError(DiaryForecastError, ValueError):
    """Invalid arguments or configuration."""

    exit_code = 1


class DataError(DiaryForecastError, ValueError):
    """Input data is malformed or insufficient."""

    exit_code = 2


class NumericError(DiaryForecastError, ArithmeticError):
    """A numerical routine failed (e.g. a solver did not converge)."""

    exit_code = 3


# dataset
class MalformedCsv(DataError):
    pass


class DuplicateDay(DataError):
    pass


class OutOfRangeLabel(DataError):
    pass


class UnparseableDate(DataError):
    pass


# synth
class InvalidConfig(UsageError):
    pass


# preprocess / features
class EmptySeries(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class NoRows(DataError):
    pass


class InvalidLag(UsageError):
    pass


class DimensionMismatch(UsageError):
    pass


# models
class DegenerateData(DataError):
    pass


class InvalidMaxFeatures(UsageError):
    pass


class NoConvergence(NumericError):
    pass


# eval / stats
class LengthMismatch(UsageError):
    pass


class EmptyInput(UsageError):
    pass


class TooFewPairs(UsageError):
    pass


class TooFewRows(DataError):
    pass


class InsufficientSubjects(DataError):
    pass
