"""Exception types raised across the package."""


class VolnormError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(VolnormError, ValueError):
    pass


class LengthMismatch(VolnormError, ValueError):
    pass


class InvalidConfig(VolnormError, ValueError):
    pass


class InvalidVolume(VolnormError, ValueError):
    pass


# volume
class EmptyVolume(VolnormError):
    pass


class InsufficientSlices(VolnormError):
    pass


class ConstantVolume(VolnormError):
    pass


class MalformedHeader(VolnormError):
    pass


class UnsupportedDatatype(VolnormError):
    pass


class TruncatedData(VolnormError):
    pass


# tensorkit
class NonScalarLoss(VolnormError):
    pass


class GraphConsumed(VolnormError):
    pass


class NonFiniteError(VolnormError, FloatingPointError):
    pass


# isgen / normalize
class VolumeTooThin(VolnormError):
    pass


class EmptyDataset(VolnormError):
    pass


class TooFewSlices(VolnormError):
    pass


class ModelMissing(VolnormError):
    pass


# radiomics / selection
class EmptyMask(VolnormError):
    pass


class DegenerateRegion(VolnormError):
    pass


class MissingModality(VolnormError, KeyError):
    pass


class WindowTooLarge(VolnormError):
    pass


# mlkit
class EmptyData(VolnormError):
    pass


class InconsistentDims(VolnormError, ValueError):
    pass


class EmptyGrid(VolnormError):
    pass


class KTooLarge(VolnormError):
    pass


class OneClassOnly(VolnormError):
    pass


class UnbalancedDesign(VolnormError):
    pass


class InvalidRates(VolnormError, ValueError):
    pass
