"""Exception hierarchy shared by all pipeline stages."""


class LenticularError(Exception):
    """Base class for every error raised by lenticolor."""


# raster I/O and validation
class NonFiniteValue(LenticularError, ValueError):
    pass


class BadMagic(LenticularError, ValueError):
    pass


class DimensionMismatch(LenticularError, ValueError):
    pass


class RangeViolation(LenticularError, ValueError):
    pass


class SimplexViolation(LenticularError, ValueError):
    pass


class GridInvariantError(LenticularError, ValueError):
    pass


# boundary detection
class ScaleOutOfRange(LenticularError, ValueError):
    pass


class NoDominantPeak(LenticularError):
    pass


# grid fitting
class TooFewPeaks(LenticularError):
    pass


class IllPosedFit(LenticularError):
    pass


class NonFiniteObjective(LenticularError, FloatingPointError):
    pass


# extraction / demosaic / color
class GridImageMismatch(LenticularError, ValueError):
    pass


class DegenerateOutput(LenticularError):
    pass


class TensorDimMismatch(LenticularError, ValueError):
    pass


class SingularMatrix(LenticularError, ValueError):
    pass


# simulation / batch
class SourceTooNarrow(LenticularError, ValueError):
    pass


class CorpusEmpty(LenticularError):
    pass


class ConfigError(LenticularError, ValueError):
    pass


# same failure, named as the simulator and overlay tools report it
DimMismatch = DimensionMismatch
