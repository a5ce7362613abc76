"""Exception types raised by planeadjust."""


class PlaneAdjustError(Exception):
    """Base class for all planeadjust errors."""


class TooFewPoints(PlaneAdjustError, ValueError):
    pass


class CollinearPoints(PlaneAdjustError, ValueError):
    pass


class EmptyObservation(PlaneAdjustError, ValueError):
    pass


class UnderconstrainedPlane(PlaneAdjustError, ValueError):
    pass


class IndexNotObserved(PlaneAdjustError, KeyError):
    pass


class SamePoseIndex(PlaneAdjustError, ValueError):
    pass


class InfeasibleConfig(PlaneAdjustError, ValueError):
    pass


class FactorizationFailure(PlaneAdjustError, ArithmeticError):
    pass


class MissingRawPoints(PlaneAdjustError, ValueError):
    pass


class MismatchedDatasets(PlaneAdjustError, ValueError):
    pass


class ParseError(PlaneAdjustError, ValueError):
    """Malformed dataset or report file.

    ``location`` carries a line number or a field path such as
    ``tracks[3].N`` so the offending entry can be found quickly.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)


class SchemaVersionMismatch(ParseError):
    pass
