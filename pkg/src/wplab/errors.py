"""Exception types shared across the laboratory.

Gate violations are errors, not warnings: a run that cannot honour its
resolution or stability preconditions must refuse to produce numbers.
"""


class WPLabError(Exception):
    """Base class for all laboratory errors."""


class ConfigError(WPLabError):
    """Malformed or inconsistent run configuration."""


class GapViolation(WPLabError):
    """Eigenvalue gap fell below the configured floor at an evaluation point."""


class StepFailure(WPLabError):
    """Adaptive step-size controller underflowed."""


class DegenerateFit(WPLabError):
    """Least-squares fit attempted on degenerate (near-zero) data."""


class ResolutionError(WPLabError):
    """Grid too coarse for the requested semiclassical parameter or momentum."""


class BoundaryError(WPLabError):
    """Packet or envelope sits too close to the periodic box boundary."""


class BoundaryLeak(WPLabError):
    """Mass near the periodic boundary exceeded the leak tolerance."""


class InterpolationError(WPLabError):
    """Envelope grid too coarse for the requested target grid."""


class MassDriftError(WPLabError):
    """Relative L2-norm drift exceeded the conservation gate."""


class GammaError(WPLabError):
    """Energy-separation constant of a two-mode run is not positive."""


class FitError(WPLabError):
    """Not enough ladder points for a meaningful order fit."""


class SchemaError(WPLabError):
    """CSV artifact does not match the documented column schema."""
