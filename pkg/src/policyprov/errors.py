"""Exception types shared across the engine."""


class PolicyProvError(Exception):
    """Base class; carries a short machine-readable code."""

    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class NotOwnerError(PolicyProvError):
    code = "not-owner"


class EmptyMetricsError(PolicyProvError):
    code = "empty-metrics"


class UnknownPhaseError(PolicyProvError):
    code = "unknown-phase"


class UnknownGoalError(PolicyProvError):
    code = "unknown-goal"


class LastMetricError(PolicyProvError):
    code = "removing-last-metric"


class UnknownNetworkError(PolicyProvError):
    code = "unknown-network"


class UnknownActorError(PolicyProvError):
    code = "unknown-actor"


class UnknownPolicyError(PolicyProvError):
    code = "unknown-policy"


class TerminatedPolicyError(PolicyProvError):
    code = "terminated-policy"


class AlreadyTerminatedError(PolicyProvError):
    code = "already-terminated"


class SelfDestinationError(PolicyProvError):
    code = "self-destination"


class IntraNetworkRouteError(PolicyProvError):
    """route_external called with source network == destination network."""

    code = "intra-network-route"


class NoOwnerConfiguredError(PolicyProvError):
    code = "no-owner-configured"


class InvalidTokenError(PolicyProvError):
    code = "invalid-token"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"invalid token fields: {', '.join(self.violations)}")


class UnknownDataIdError(PolicyProvError):
    code = "unknown-data-id"


class ScenarioError(PolicyProvError):
    code = "scenario-error"


class RunawayScenarioError(PolicyProvError):
    code = "runaway-scenario"

    def __init__(self, pending):
        self.pending = list(pending)
        super().__init__(f"step budget exhausted; pending triggers: {self.pending}")
