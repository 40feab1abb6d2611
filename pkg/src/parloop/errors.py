"""Exception hierarchy shared across the pipeline.

Every error carries an ``exit_code`` so the command line front end can map a
failure to the documented status without a lookup table.
"""


class ParloopError(Exception):
    exit_code = 3


class ConfigError(ParloopError):
    exit_code = 2

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class DataError(ParloopError):
    exit_code = 3


# loop_model / dependence
class TrapError(DataError):
    """Runtime fault while interpreting a loop (division by zero, bad index, non-finite value)."""


class ParseError(DataError):
    pass


class NotAffine(DataError):
    """Index expression is not affine in the loop variable."""


# ga
class ExhaustedError(DataError):
    """No class-consistent individual survived evolution."""


# corpus
class EmptyClassError(DataError):
    pass


class MissingAnnotationError(DataError):
    pass


class MalformedAnnotationError(DataError):
    pass


class SchemaVersionError(DataError):
    pass


# tokenizer
class CorpusTooSmallError(DataError):
    pass


class InvalidIdError(DataError):
    pass


# classifier
class ShapeError(DataError):
    pass


class DivergenceError(ParloopError):
    exit_code = 4


# evaluation
class TooSmallError(DataError):
    pass


class LengthMismatchError(DataError):
    pass


class TooFewSamplesError(DataError):
    pass
