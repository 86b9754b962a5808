"""Exception types.

Input problems (bad files, malformed matrices) derive from ``InputError``;
problems raised while estimating derive from ``EstimationError``.  The CLI
maps the two families to different exit codes.
"""


class LooError(ValueError):
    """Base class for all errors raised by this package."""


class InputError(LooError):
    pass


class EstimationError(LooError):
    pass


class NonFinite(InputError):
    def __init__(self, row, col):
        self.row = row
        self.col = col
        super().__init__(f"non-finite log-likelihood at draw {row}, point {col}")


class EmptyMatrix(InputError):
    pass


class EmptyInput(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class NonRectangular(ParseError):
    pass


class NoMatchingColumns(ParseError):
    pass


class InvalidProbability(EstimationError):
    pass


class OutOfSupport(EstimationError):
    pass


class InsufficientTail(EstimationError):
    pass


class NonPositiveExceedance(EstimationError):
    pass


class DegenerateSampleSize(EstimationError):
    pass


class LengthMismatch(EstimationError):
    pass


class InvalidReplicates(EstimationError):
    pass


class InvalidK(EstimationError):
    pass


class CoverageError(EstimationError):
    pass
