"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map it onto the stable
process contract (3 = data error, 4 = numeric failure).
"""


class KittiCError(Exception):
    exit_code = 3


class DataError(KittiCError):
    exit_code = 3


class NumericError(KittiCError):
    exit_code = 4


# kitti_io
class TruncatedFile(DataError):
    pass


class NonFiniteValue(DataError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class MalformedLine(DataError):
    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class UnknownMatrixKey(DataError):
    pass


class SingularCalibration(NumericError):
    pass


class IoFailure(DataError):
    pass


# weather / image
class WrongKind(ValueError, KittiCError):
    exit_code = 2


# geometry / metrics
class DegeneratePolygon(DataError):
    pass


class MismatchedFrames(DataError):
    pass


class ZeroCleanAp(DataError):
    pass


class RowMismatch(DataError):
    pass


# fusion
class ShapeMismatch(ValueError, KittiCError):
    exit_code = 3


class NonFiniteGradient(NumericError):
    pass


class DivergedLoss(NumericError):
    pass


class WrongStrategy(ValueError, KittiCError):
    exit_code = 2


# harness / cli
class PlacementFailure(NumericError):
    pass


class MissingSubtree(DataError):
    pass


class PartialWrite(DataError):
    pass
