"""Exception and warning types raised across the toolkit."""


class JpjicaError(Exception):
    """Base class for all toolkit errors."""


class EmptyInput(JpjicaError):
    """No subjects / no data supplied."""


class NonFiniteData(JpjicaError):
    """NaN or Inf encountered where finite values are required."""


# Alias used by the low-level numeric routines.
NonFinite = NonFiniteData


class MismatchedVoxelCount(JpjicaError):
    """Subjects do not share a common sample (voxel) count."""


class LengthMismatch(JpjicaError):
    """Vectors that must share a length do not."""


class OrderOutOfRange(JpjicaError):
    """Cumulant order outside the supported set {2, 3, 4}."""


class NotSymmetric(JpjicaError):
    """Matrix expected to be symmetric is not."""


class DegenerateSampleCount(JpjicaError):
    """Too few samples to form the requested statistic."""


class SingularCovariance(JpjicaError):
    """Covariance eigenvalue below tolerance; cannot invert."""


class OrderExceedsRank(JpjicaError):
    """Requested model order exceeds the rank of the data."""


class TooFewPoints(JpjicaError):
    """Fewer distinct points than requested clusters."""


class InsufficientSamples(JpjicaError):
    """A statistical test needs more observations per group."""


class InvalidQ(JpjicaError):
    """False-discovery-rate level must lie in (0, 1)."""


class PartnerLengthMismatch(JpjicaError):
    """Partner source rows do not match the data sample count."""


class ZeroSource(JpjicaError):
    """A source estimate with (near-)zero norm where nonzero is required."""


class RankDeficientMixing(JpjicaError):
    """Simulated mixing matrix failed the conditioning bound twice."""


class InvalidScenario(JpjicaError):
    """Simulation scenario violates a structural constraint."""


class NoJointSources(JpjicaError):
    """Threshold selection found no joint slot and no usable fallback."""


class UnseparableFeatures(JpjicaError):
    """Feature bounds for threshold selection are inverted."""


class DegenerateCorrelation(JpjicaError):
    """Correlation undefined (zero variance) where it is required."""


class GroupTooSmall(JpjicaError):
    """Spatial classification needs at least two subjects per group."""


class ConvergenceWarning(UserWarning):
    """Inner extraction hit its iteration cap before the stopping rule."""


class CountMismatchWarning(UserWarning):
    """Estimated and reference source counts differ; extra rows ignored."""


class SingleSubjectWarning(UserWarning):
    """Single-subject input: decomposition degrades to plain single-set ICA."""
