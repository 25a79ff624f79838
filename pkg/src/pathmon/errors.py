"""Exception hierarchy.

Errors split into two families so the CLI can map them onto exit codes:
``InvalidInput`` (bad files, arguments, shapes) and ``NumericalFailure``
(decompositions that misbehave on otherwise valid input).
"""


class PathmonError(Exception):
    """Base class for all package errors."""


class InvalidInput(PathmonError, ValueError):
    pass


class NumericalFailure(PathmonError, ArithmeticError):
    pass


class ParseError(InvalidInput):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ColumnMismatch(InvalidInput):
    pass


class MissingValue(InvalidInput):
    pass


class RangeOutOfBounds(InvalidInput):
    pass


class DimensionMismatch(InvalidInput):
    pass


class UnknownLink(InvalidInput):
    pass


class UnknownNode(InvalidInput):
    pass


class NotStronglyConnected(InvalidInput):
    pass


class KTooLarge(InvalidInput):
    pass


class WindowTooLarge(InvalidInput):
    pass


class EmptyTruth(InvalidInput):
    """No ground-truth events, so an ROC curve is undefined."""


class DegenerateSpectrum(NumericalFailure):
    pass


class RankDeficientSample(NumericalFailure):
    pass


class SingularVss(NumericalFailure):
    pass
