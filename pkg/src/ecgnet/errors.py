"""Exception taxonomy.

Every error carries an ``exit_code`` so the CLI can map failures to
process exit statuses: 2 usage/config, 3 data, 4 numeric.
"""


class EcgError(Exception):
    exit_code = 3


class UsageError(EcgError):
    exit_code = 2


class DataError(EcgError):
    exit_code = 3


class NumericError(EcgError):
    exit_code = 4


# record_io
class MalformedHeader(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class TruncatedFile(DataError):
    pass


class ValueOutOfRange(DataError):
    pass


class MalformedAnnotationLine(DataError):
    pass


class UnsortedAnnotations(DataError):
    pass


class BadContainer(DataError):
    """A binary container has the wrong magic or a short payload."""


# dsp
class EvenWindow(UsageError):
    pass


class WindowLargerThanSignal(DataError):
    pass


class EmptySignal(DataError):
    pass


class DegenerateVariance(NumericError):
    pass


class PipelineOrderError(UsageError):
    pass


# segmentation
class EmptyWindow(DataError):
    pass


class MissingRecord(DataError):
    pass


# engine / model
class ShapeMismatch(NumericError):
    pass


class PoolLargerThanInput(NumericError):
    pass


class InvalidSpec(UsageError):
    pass


# training / evaluation
class EmptyInput(DataError):
    pass


class SplitLeakage(DataError):
    """Training was handed segments tagged as test data."""


class LengthMismatch(DataError):
    pass


class MissingCheckpoint(DataError):
    pass


# introspection
class UnknownLayerTag(UsageError):
    pass


class WrongBinCount(DataError):
    pass


# config
class UnknownField(UsageError):
    pass


class InvalidValue(UsageError):
    pass
