"""Network layer: per-network policy controllers and external connectors.

Each network's controller creates tokens (ids, sequence numbers, logical
timestamps, goal/phase stamps), routes intra-network, and hands cross-network
tokens to the connector pair. No routes are pre-allocated: the only routing
state is the address books (registered actors and linked networks).
"""

from __future__ import annotations

import random
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (
    InvalidTokenError,
    IntraNetworkRouteError,
    NoOwnerConfiguredError,
    SelfDestinationError,
    TerminatedPolicyError,
    UnknownActorError,
    UnknownNetworkError,
    UnknownPolicyError,
)
from .goals import GoalEngine
from .model import (
    Address,
    ArtifactNature,
    CommunicationPattern,
    DataRecord,
    LocalToken,
    PolicyRef,
    PolicyStatus,
    RoutedToken,
    StakeholderNature,
    TokenKind,
    validate_local_token,
    validate_routed_token,
)
from .storage import DataStore, EventLog, LogicalClock


@dataclass(frozen=True)
class DeliveryReceipt:
    token_id: str
    outcome: str  # delivered | duplicate-ignored | dead-letter
    at: int

    def to_record(self) -> dict:
        return {"token_id": self.token_id, "outcome": self.outcome, "at": self.at}


@dataclass
class Network:
    network_id: str
    actors: set = field(default_factory=set)
    seq: dict = field(default_factory=dict)  # policy_id -> last issued


class NetworkEngine:
    def __init__(
        self,
        log: EventLog,
        clock: LogicalClock,
        store: DataStore,
        policies: dict[str, PolicyRef],
        goal_engine: GoalEngine,
        seed: int = 0,
        owner: Optional[Address] = None,
    ):
        self._log = log
        self._clock = clock
        self._store = store
        self._policies = policies
        self._goals = goal_engine
        self._rng = random.Random(seed)
        self.owner = owner
        self.networks: dict[str, Network] = {}
        self.links: set[frozenset] = set()
        self._delivered: set[str] = set()
        self._token_ids: set[str] = set()
        self._policy_counter = 0
        # Simulation hook: called with each delivered RoutedToken.
        self.on_delivered: Optional[Callable[[RoutedToken], None]] = None
        goal_engine.on_goal_satisfied = self._notify_goal_satisfied

    # -- registry ---------------------------------------------------------

    def register_network(self, network_id: str) -> Network:
        if not network_id:
            raise ValueError("network_id must be non-empty")
        return self.networks.setdefault(network_id, Network(network_id))

    def register_actor(self, network_id: str, actor_id: str) -> Address:
        if not actor_id:
            raise ValueError("actor_id must be non-empty")
        self._network(network_id).actors.add(actor_id)
        return Address(network_id, actor_id)

    def link_networks(self, a: str, b: str):
        self._network(a)
        self._network(b)
        self.links.add(frozenset((a, b)))

    def _network(self, network_id: str) -> Network:
        try:
            return self.networks[network_id]
        except KeyError:
            raise UnknownNetworkError(network_id) from None

    def is_registered(self, address: Address) -> bool:
        net = self.networks.get(address.network_id)
        return net is not None and address.actor_id in net.actors

    # -- sequencing and policies -------------------------------------------

    def next_seq(self, network_id: str, policy_id: str) -> int:
        policy = self._policy(policy_id)
        if policy.status is PolicyStatus.TERMINATED:
            raise TerminatedPolicyError(policy_id)
        net = self._network(network_id)
        net.seq[policy_id] = net.seq.get(policy_id, 0) + 1
        return net.seq[policy_id]

    def _policy(self, policy_id: str) -> PolicyRef:
        try:
            return self._policies[policy_id]
        except KeyError:
            raise UnknownPolicyError(policy_id) from None

    def notify_new_policy(self, submission: DataRecord, from_addr: Address):
        """Open a policy for a stored submission and notify the owner."""
        if self.owner is None:
            raise NoOwnerConfiguredError()
        if submission.data_id not in self._store:
            raise ValueError("submission must be stored before notification")
        self._policy_counter += 1
        policy_id = f"pol-{self._policy_counter}"
        policy = PolicyRef(policy_id, self.owner)
        self._policies[policy_id] = policy
        self._log.append(
            "decision",
            {
                "policy_id": policy_id,
                "decision": "policy-created",
                "by": str(from_addr),
                "data_reference": submission.data_id,
            },
            self._clock.tick(),
        )
        token = receipt = None
        if from_addr != self.owner:
            token, receipt = self.send_token(
                from_addr,
                policy_id,
                destination=self.owner,
                kind=TokenKind.NOTIFICATION,
                task_description="new policy submission",
                data_reference=submission.data_id,
                data_details=submission.media_hint,
            )
        return policy, token, receipt

    # -- token creation ------------------------------------------------------

    def create_local_token(
        self,
        actor: Address,
        policy_id: str,
        task: str,
        task_input: str,
        task_output: str,
        task_description: str,
        nature_of_task_input: ArtifactNature = ArtifactNature.DOCUMENT,
        nature_of_task_output: ArtifactNature = ArtifactNature.DOCUMENT,
        data_details: str = "",
        source_of_evidence: str = "",
        data_reference: Optional[str] = None,
        goal_id: Optional[str] = None,
        phase_id: Optional[str] = None,
    ) -> LocalToken:
        policy = self._active_policy(policy_id)
        self._require_actor(actor)
        goal_id, phase_id = self._stamp(policy_id, goal_id, phase_id)
        token = LocalToken(
            token_id=self._new_token_id(),
            policy_id=policy_id,
            phase_id=phase_id,
            goal_id=goal_id,
            seq_num=self.next_seq(actor.network_id, policy_id),
            task=task,
            task_input=task_input,
            nature_of_task_input=nature_of_task_input,
            task_output=task_output,
            nature_of_task_output=nature_of_task_output,
            task_description=task_description,
            who_carried_out=actor,
            nature_of_stakeholders=self._stakeholder_nature(actor, policy),
            data_details=data_details or task_input,
            source_of_evidence=source_of_evidence or task_input,
            timestamp=self._clock.tick(),
            data_reference=data_reference,
        )
        result = validate_local_token(token, defined_goal_ids=self._goals.goal_ids)
        if not result.ok:
            raise InvalidTokenError(result.violations)
        self._log.append("local-token", token.to_record(), token.timestamp)
        self._goals.evaluate_event(token)
        return token

    def send_token(
        self,
        actor: Address,
        policy_id: str,
        destination: Address,
        kind: TokenKind = TokenKind.TASK_HANDOFF,
        previous_task: str = "",
        previous_task_output: str = "",
        nature_of_task_output: ArtifactNature = ArtifactNature.DOCUMENT,
        task_description: str = "",
        required_action: Optional[str] = None,
        communication_pattern: CommunicationPattern = CommunicationPattern.SEQUENTIAL,
        data_details: str = "",
        source_of_evidence: str = "",
        data_reference: Optional[str] = None,
        goal_id: Optional[str] = None,
        phase_id: Optional[str] = None,
    ) -> tuple[RoutedToken, DeliveryReceipt]:
        policy = self._active_policy(policy_id)
        self._require_actor(actor)
        if destination == actor:
            raise SelfDestinationError("self-messaging must use a local token")
        goal_id, phase_id = self._stamp(policy_id, goal_id, phase_id)
        token = RoutedToken(
            token_id=self._new_token_id(),
            policy_id=policy_id,
            phase_id=phase_id,
            goal_id=goal_id,
            seq_num=self.next_seq(actor.network_id, policy_id),
            previous_task=previous_task,
            previous_task_output=previous_task_output,
            nature_of_task_output=nature_of_task_output,
            task_description=task_description,
            required_action=required_action,
            communication_pattern=communication_pattern,
            nature_of_stakeholders=self._stakeholder_nature(destination, policy),
            data_details=data_details or task_description,
            source_of_evidence=source_of_evidence or previous_task,
            communication_with=destination,
            data_reference=data_reference,
            timestamp=self._clock.tick(),
            source_address=actor,
            destination_address=destination,
            kind=kind,
        )
        result = validate_routed_token(token, defined_goal_ids=self._goals.goal_ids)
        if not result.ok:
            raise InvalidTokenError(result.violations)
        self._log.append("routed-token-send", token.to_record(), token.timestamp)
        if destination.network_id == actor.network_id:
            receipt = self._deliver_intra(token)
        else:
            receipt = self.route_external(token)
        return token, receipt

    # -- delivery -------------------------------------------------------------

    def _deliver_intra(self, token: RoutedToken) -> DeliveryReceipt:
        dest = token.destination_address
        net = self.networks.get(dest.network_id)
        if net is None or dest.actor_id not in net.actors:
            return self._receipt(token, "dead-letter")
        return self._deliver(token)

    def route_external(self, token: RoutedToken) -> DeliveryReceipt:
        """Connector-to-connector handoff; exactly once per token_id."""
        src_net = token.source_address.network_id
        dst_net = token.destination_address.network_id
        if src_net == dst_net:
            raise IntraNetworkRouteError(dst_net)
        if token.token_id in self._delivered:
            return self._receipt(token, "duplicate-ignored")
        if dst_net not in self.networks or frozenset((src_net, dst_net)) not in self.links:
            return self._receipt(token, "dead-letter")
        if token.destination_address.actor_id not in self.networks[dst_net].actors:
            return self._receipt(token, "dead-letter")
        return self._deliver(token)

    def _deliver(self, token: RoutedToken) -> DeliveryReceipt:
        if token.token_id in self._delivered:
            return self._receipt(token, "duplicate-ignored")
        self._delivered.add(token.token_id)
        self._log.append("routed-token-receive", token.to_record(), self._clock.tick())
        receipt = self._receipt(token, "delivered")
        self._goals.evaluate_event(token)
        if self.on_delivered is not None:
            self.on_delivered(token)
        return receipt

    def _receipt(self, token: RoutedToken, outcome: str) -> DeliveryReceipt:
        receipt = DeliveryReceipt(token.token_id, outcome, self._clock.tick())
        self._log.append(
            "receipt",
            receipt.to_record() | {"policy_id": token.policy_id},
            receipt.at,
        )
        return receipt

    # -- goal-satisfaction notifications ---------------------------------------

    def _notify_goal_satisfied(self, goal, event):
        """Emit a notification token to the policy owner (first-class token)."""
        policy = self._policies.get(goal.policy_id)
        if policy is None:
            return
        source = _event_actor(event)
        if source is None or source == policy.owner or not self.is_registered(source):
            return
        self.send_token(
            source,
            goal.policy_id,
            destination=policy.owner,
            kind=TokenKind.NOTIFICATION,
            task_description=f"goal satisfied: {goal.name}",
            goal_id=goal.goal_id,
            phase_id=goal.phase_id,
        )

    # -- helpers ---------------------------------------------------------------

    def _active_policy(self, policy_id: str) -> PolicyRef:
        policy = self._policy(policy_id)
        if policy.status is PolicyStatus.TERMINATED:
            raise TerminatedPolicyError(policy_id)
        return policy

    def _require_actor(self, actor: Address):
        if not self.is_registered(actor):
            raise UnknownActorError(str(actor))

    def _stamp(self, policy_id: str, goal_id: Optional[str], phase_id: Optional[str]):
        """The controller reads the goal display to stamp goal and phase."""
        if goal_id:
            goal = self._goals.goal(goal_id)
            return goal_id, phase_id or goal.phase_id
        current = self._goals.current_goal(policy_id)
        if current is not None:
            return current.goal_id, phase_id or current.phase_id
        return "", phase_id or (self._goals.phases[0] if self._goals.phases else "")

    def _stakeholder_nature(self, actor: Address, policy: PolicyRef) -> StakeholderNature:
        if actor.network_id == policy.owner.network_id:
            return StakeholderNature.INTERNAL
        return StakeholderNature.EXTERNAL

    def _new_token_id(self) -> str:
        token_id = str(uuid.UUID(int=self._rng.getrandbits(128), version=4))
        self._token_ids.add(token_id)
        return token_id


def _event_actor(event) -> Optional[Address]:
    if isinstance(event, LocalToken):
        return event.who_carried_out
    if isinstance(event, RoutedToken):
        return event.source_address
    if isinstance(event, DataRecord):
        return event.created_by
    return None
