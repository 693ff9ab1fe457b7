"""Exception types raised across the longlens package."""


class LonglensError(Exception):
    """Base class for all longlens-specific errors."""


class FormatError(LonglensError, ValueError):
    """A file does not conform to its declared format."""


class DimensionError(LonglensError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class EmptyMaskError(LonglensError, ValueError):
    """A nonempty validity mask was required."""


class RegionTooSmallError(LonglensError, ValueError):
    """Evaluation region is smaller than the analysis window."""


class SingularTransformError(LonglensError, ValueError):
    """Geometric transform is not invertible."""


class NoFundusPixelsError(LonglensError, ValueError):
    """No pixel in the segmentation ROI exceeds the fundus floor."""


class EmptySequenceError(LonglensError, ValueError):
    """An eye sequence with at least one frame was required."""


class InsufficientHistoryError(LonglensError, ValueError):
    """Not enough history frames for the requested predictor."""


class DegenerateTimesError(LonglensError, ValueError):
    """Two history frames share the same timestamp."""


class NegativeDeltaError(LonglensError, ValueError):
    """Time deltas must be non-negative."""


class InsufficientMatchesError(LonglensError, ValueError):
    """Fewer matches than the minimal sample for the model kind."""


class DegenerateConfigurationError(LonglensError, ValueError):
    """Point configuration cannot constrain the model (e.g. collinear)."""


class NoViableModelError(LonglensError, ValueError):
    """Every candidate transform model was disqualified."""


class EmptyListError(LonglensError, ValueError):
    """A nonempty list was required."""


class UnknownLateralityError(LonglensError, ValueError):
    """Eye laterality must be known to normalize chirality."""


class DegenerateCorrelationError(LonglensError, ValueError):
    """Correlation is undefined for constant input."""


class KTooSmallError(LonglensError, ValueError):
    """At least two samples per eye are needed for the decomposition."""


class MissingPredictionError(LonglensError, ValueError):
    """No prediction file found for an eye."""


class NoOverlapError(LonglensError, ValueError):
    """Two result tables share no eyes."""


class ManifestError(LonglensError, ValueError):
    """Dataset manifest failed validation."""
