"""Exception types shared across the package."""

from __future__ import annotations


class WavetrajError(Exception):
    """Base class for errors raised by this package."""


class ParallelLinesError(WavetrajError):
    """Two lines have (numerically) equal slopes and no unique intersection."""


class NoFollowersError(WavetrajError):
    """The subject vehicle is the last one past the detector."""


class InsufficientPointsError(WavetrajError, ValueError):
    """An operation needs more samples than the input provides."""


class PositionOutOfRangeError(WavetrajError):
    """A queried position lies outside the positional span of a trajectory."""


class StepTruncated(WavetrajError):
    """Calibration of one step found no evaluable intersection; the profile ends."""


class EmptyProfileError(WavetrajError):
    """A connected vehicle has no followers to calibrate against."""


class NoLeadingCvError(WavetrajError):
    """No connected vehicle passed the detector before the queried vehicle."""


class BeyondCoverageError(WavetrajError):
    """The vehicle sits farther behind its connected vehicle than the profile reaches."""


class NoOverlapError(WavetrajError):
    """Two trajectories share no common time or position support."""


class TooShortError(WavetrajError, ValueError):
    """A speed series is too short for spectral analysis."""


class DegenerateSpectrumError(WavetrajError):
    """A spectrum has zero area, so no overlap ratio is defined."""


class ZeroDistanceError(WavetrajError):
    """A trajectory covers no distance, so per-distance rates are undefined."""


class ParseError(WavetrajError):
    """An input document or CSV file could not be parsed."""


class EmptyLaneError(WavetrajError):
    """The requested lane contains no usable vehicle tracks."""


class GenerationError(WavetrajError):
    """Synthetic scenario generation produced an inconsistent state."""
