"""Exception types raised across the library.

Every loader / numeric precondition failure maps to a distinct class so
callers (and the CLI exit-code logic) can tell usage errors from IO
errors from numerical failures.
"""


class RadVoteError(Exception):
    """Base class for all library errors."""


# -- geometry / numerics ----------------------------------------------------

class InvalidDepthError(RadVoteError):
    """Pixel depth is zero, negative, or non-finite."""


class DegenerateGeometryError(RadVoteError):
    """Zero-extent cloud, coincident points, or undefined direction."""


class RankError(RadVoteError):
    """Point set is collinear / rank-deficient for transform estimation."""


class SizeMismatchError(RadVoteError):
    """Inputs have incompatible sizes (point counts, map dimensions)."""


class ParameterError(RadVoteError):
    """Parameter outside its valid range (e.g. non-positive radius)."""


# -- accumulator ------------------------------------------------------------

class NoPeakError(RadVoteError):
    """Peak detection on an all-zero accumulator grid."""


class GridMismatchError(RadVoteError):
    """Grids with different origin / resolution / dims cannot be merged."""


class EmptyRenderError(RadVoteError):
    """Model renders to zero visible pixels."""


# -- io ---------------------------------------------------------------------

class PlyHeaderError(RadVoteError):
    """Malformed or unsupported PLY header."""


class PlyLayoutError(RadVoteError):
    """PLY vertex element layout not supported."""


class PlyTruncatedError(RadVoteError):
    """PLY payload shorter than the header promises."""


class DepthImageError(RadVoteError):
    """Depth image has the wrong bit depth or channel count."""


class ConfigError(RadVoteError):
    """Experiment configuration is invalid; message names the field."""


class GridDumpError(RadVoteError):
    """Accumulator dump blob has a bad magic, version, or size."""


class PoseFileError(RadVoteError):
    """Pose file line cannot be parsed."""
