"""Exception types shared across the package."""


class SwarmPlanError(Exception):
    """Base class for all package-specific errors."""


class InvalidScenario(SwarmPlanError):
    """Scenario definition violates its invariants (overlapping starts/goals, bad eta, ...)."""


class InvalidP(InvalidScenario):
    """Agent count not supported by a scenario generator."""


class PlacementFailed(SwarmPlanError):
    """Rejection sampling could not place all agents without overlap."""


class ConflictingCertainty(SwarmPlanError):
    """Two infinite-certainty messages into one equality node disagree beyond tolerance."""


class NoFeasibleConfiguration(SwarmPlanError):
    """The spring-slab solver found no feasible candidate (should not occur; kept for diagnosis)."""


class EpochCapExceeded(SwarmPlanError):
    """Local planner hit its epoch cap before all agents arrived.

    Carries the partial epoch trace so callers can inspect progress.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
