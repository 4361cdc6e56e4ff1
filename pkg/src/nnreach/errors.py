"""Exception types shared across the package."""


class NNReachError(Exception):
    """Base class for all package errors."""


class GraphError(NNReachError):
    """Base class for computational-graph construction/usage errors."""


class CycleDetected(GraphError):
    pass


class ArityMismatch(GraphError):
    pass


class DimensionMismatch(GraphError):
    pass


class DanglingEdge(GraphError):
    pass


class StateDimMismatch(GraphError):
    pass


class UnreachableOutput(GraphError):
    pass


class InvalidInterval(NNReachError):
    """Lower bound exceeds upper bound."""


class MissingPreactivation(NNReachError):
    """An activation node has no interval for its input."""


class UnboundedInput(NNReachError):
    """An input node lacks finite box bounds in some direction."""


class LPError(NNReachError):
    pass


class IterationLimit(LPError):
    """The simplex hit its pivot cap; signals numerical trouble, never a bound."""


class TimeLimit(NNReachError):
    """Branch-and-bound ran out of budget; carries the best sound bound."""

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class TemplateMismatch(NNReachError):
    """Two reach results use different direction templates."""


class UnknownDemo(NNReachError):
    pass


class ScenarioError(NNReachError):
    """Malformed scenario file; message names the offending field."""
