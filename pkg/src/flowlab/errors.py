"""Exception hierarchy shared by every flowlab module."""


class FlowlabError(Exception):
    """Base class for all flowlab errors."""


class DegenerateCurve(FlowlabError):
    pass


class TooFewNodes(FlowlabError):
    pass


class InvalidRegion(FlowlabError):
    pass


class NotAGraph(FlowlabError):
    pass


class SingularArgument(FlowlabError):
    pass


class NonConvergedDerivative(FlowlabError):
    pass


class NumericalBreakdown(FlowlabError):
    pass


class OutsideTube(FlowlabError):
    pass


class TubeTooWide(FlowlabError):
    pass


class IllConditionedLayer(FlowlabError):
    pass


class TopologyBreak(FlowlabError):
    """Raised when an evolving boundary self-intersects; the last valid state is attached."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class FitDomainError(FlowlabError):
    pass


class OracleFailure(FlowlabError):
    pass


class MissingKey(FlowlabError):
    pass


class BadValue(FlowlabError):
    pass
