"""Exception hierarchy shared across the pipeline.

Three families matter to callers: ``InputError`` (bad or missing user
inputs, CLI exit code 1), ``BackendError`` (language-model transport or
fixture problems, exit code 2), and ``InternalError`` (invariant
violations that indicate a bug, exit code 3).
"""


class PipelineError(Exception):
    """Base class for all streetscan errors."""


class InputError(PipelineError):
    """Invalid, unreadable, or out-of-contract input data."""


class InternalError(PipelineError):
    """An internal invariant was violated; indicates a bug."""


class BackendError(PipelineError):
    """Language-model backend failure."""


# -- geodesy

class IdenticalPointsError(InputError):
    """Bearing requested between coincident points."""


class OutOfDomainError(InputError):
    """Coordinate outside the supported projection domain."""


# -- linkage / rectification

class EmptyInputError(InputError):
    """An operation received an empty collection it cannot work with."""


class InvalidFrameIndexError(InputError):
    """Frame number at or beyond the video's total frame count."""


class MissingVideoMetadataError(InputError):
    """No fps / frame-count information available for a video id."""


class StationaryError(PipelineError):
    """Vehicle displacement too small to estimate a heading."""


class NotPanoramicError(InputError):
    """Dewarp requested on an image that is not equirectangular."""


class DegenerateImageError(InputError):
    """Image too small to resample."""


# -- model backend

class TransportError(BackendError):
    """Network-level failure talking to the model endpoint."""


class FixtureMissError(BackendError):
    """Recorded backend has no canned response for a request."""


# -- statistics / reporting

class LengthMismatchError(InputError):
    """Paired sequences of unequal length."""


class ZeroVarianceError(InputError):
    """Spatial statistic requested on a constant-valued field."""


class MissingVisitError(InputError):
    """Change analysis requires consolidated labels for both visits."""


class ExcludedInputError(InputError):
    """Agreement category requested for an excluded change record."""
