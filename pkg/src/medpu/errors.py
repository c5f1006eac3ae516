"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures to
its stable contract (2 I/O or format, 3 empty/degenerate input, 4 invalid
argument).
"""


class MedPUError(Exception):
    exit_code = 1


class FormatError(MedPUError, ValueError):
    exit_code = 2


class TruncatedFile(FormatError):
    pass


class EmptyInput(MedPUError, ValueError):
    exit_code = 3


class EmptyMask(EmptyInput):
    pass


class DegenerateExtent(MedPUError, ValueError):
    exit_code = 3


class DegenerateMesh(MedPUError, ValueError):
    exit_code = 3


class ZeroAreaFace(DegenerateMesh):
    pass


class PatchTooSmall(MedPUError, ValueError):
    exit_code = 3


class InsufficientPoints(MedPUError, ValueError):
    exit_code = 3


class MissingNormals(MedPUError, ValueError):
    exit_code = 4


class InvalidArgument(MedPUError, ValueError):
    exit_code = 4


class InvalidRadius(InvalidArgument):
    pass


class InvalidVoxelSize(InvalidArgument):
    pass


class InvalidThreshold(InvalidArgument):
    pass


class UnsupportedRatio(InvalidArgument):
    pass


class GridTooLarge(InvalidArgument):
    pass
