"""Exception types raised across the tracker."""


class TrackerError(Exception):
    """Base class for all tracker errors."""


class AllWeightsZero(TrackerError):
    """A factor has no hypothesis with positive weight."""


class SingularInnovation(TrackerError):
    """Innovation covariance is not symmetric positive-definite."""


class Infeasible(TrackerError):
    """No finite-cost assignment exists."""


class EmptyArray(TrackerError, ValueError):
    """k_min_sum received an empty array."""


class LabelCollision(TrackerError):
    """Factors that were expected to be label-disjoint share a label."""


class InvalidSpec(TrackerError, ValueError):
    """A scenario description is inconsistent."""


class ConfigError(TrackerError, ValueError):
    """A tracker configuration file is malformed or incomplete."""


class FrameFormatError(TrackerError, ValueError):
    """A frame-file line is malformed; ``line`` is 1-based."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason
