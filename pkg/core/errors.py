"""
RIS Link Simulator - Error Types
Exception hierarchy shared by the numerics, link, training and CLI layers.
"""


class RisLinkError(Exception):
    """Base class for every error raised by this package."""
    code = "runtime_error"


class DimensionError(RisLinkError, ValueError):
    """Matrix, vector or layer shapes do not agree."""
    code = "dimension_mismatch"


class NonFiniteError(RisLinkError, ValueError):
    """NaN or Inf reached an operation that requires finite input."""
    code = "non_finite"


class PhaseRangeError(RisLinkError, ValueError):
    """A phase shift lies outside [-pi, pi]."""
    code = "phase_range"


class DegenerateChannelError(RisLinkError):
    """Every singular value of the cascaded channel is zero."""
    code = "degenerate_channel"


class RankDeficiencyError(RisLinkError):
    """An active stream has no gain or no power, so the equalizer is undefined."""
    code = "rank_deficient"


class OneHotError(RisLinkError, ValueError):
    """A block that should be one-hot is not."""
    code = "malformed_onehot"


class ConfigError(RisLinkError, ValueError):
    """Invalid experiment or training configuration."""
    code = "config_error"


class CheckpointError(RisLinkError):
    """Checkpoint could not be read back."""
    code = "checkpoint_error"


class CheckpointVersionError(CheckpointError):
    code = "version_mismatch"


class CheckpointCorruptError(CheckpointError):
    code = "corrupt"


class CheckpointDimensionError(CheckpointError):
    code = "dimension_mismatch"


class BackwardBeforeForwardError(RisLinkError):
    """A layer's backward pass ran without a cached forward pass."""
    code = "no_forward_cache"
