"""Exception types raised across the pipeline."""


class SymplanError(Exception):
    """Base class for every error raised by this package."""


class MissingManifest(SymplanError):
    pass


class ShapeMismatch(SymplanError):
    def __init__(self, trajectory_id, expected, actual):
        self.trajectory_id = trajectory_id
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"trajectory {trajectory_id!r}: expected {expected}, got {actual}")


class NonFiniteFeature(SymplanError):
    def __init__(self, location):
        self.location = location
        super().__init__(f"non-finite feature at {location}")


class ZeroNorm(SymplanError, ValueError):
    pass


class IndexOutOfRange(SymplanError, IndexError):
    pass


class InvalidParameter(SymplanError, ValueError):
    pass


class KeyFrameMismatch(SymplanError):
    pass


class TooFewSamples(SymplanError, ValueError):
    pass


class SingleCluster(SymplanError, ValueError):
    pass


class EmptyTransitionSet(SymplanError):
    pass


class ArityMismatch(SymplanError, ValueError):
    pass


class UnknownState(SymplanError, KeyError):
    def __init__(self, which, state):
        self.which = which
        self.state = state
        super().__init__(f"{which} state {state} is not a graph node")

    def __str__(self):
        return self.args[0]


class NoPath(SymplanError):
    pass


class WidthMismatch(SymplanError, ValueError):
    pass


class DivergedTraining(SymplanError):
    pass


class NoKeyFramePairs(SymplanError):
    pass


class EmptyIndexEntry(SymplanError):
    def __init__(self, state):
        self.state = state
        super().__init__(f"no indexed frames for state {state}")


class GoalNotInGraph(SymplanError):
    pass


class MaxStepsExceeded(SymplanError):
    def __init__(self, record):
        self.record = record
        super().__init__(f"goal not reached after {len(record.steps)} steps")


class SeparationUnsatisfiable(SymplanError):
    pass


class NoSkillsPossible(SeparationUnsatisfiable):
    pass


class UnresolvableFrameRef(SymplanError, KeyError):
    pass


class ConfigError(SymplanError, ValueError):
    pass


class StageError(SymplanError):
    """Wraps an error with the name of the pipeline stage it came from."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
