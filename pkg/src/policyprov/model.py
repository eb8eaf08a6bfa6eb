"""Core domain types: addresses, token records, and their validation.

Every type is an immutable value and serializes to a flat JSON object with
snake_case keys; that flat form is the event-log record format.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Optional

DEFAULT_PHASES = ("agenda-setting", "analysis")


class ArtifactNature(str, Enum):
    DATA = "data"
    DOCUMENT = "document"
    DECISION = "decision"
    REQUIRED_ACTION = "required-action"


class StakeholderNature(str, Enum):
    INTERNAL = "internal"
    EXTERNAL = "external"


class CommunicationPattern(str, Enum):
    SEQUENTIAL = "sequential"
    PARALLEL = "parallel"
    SYNCHRONOUS = "synchronous"
    ASYNCHRONOUS = "asynchronous"
    SYNCHRONOUS_PARALLEL = "synchronous-parallel"
    ASYNCHRONOUS_PARALLEL = "asynchronous-parallel"

    @classmethod
    def combine(cls, base: "CommunicationPattern", parallel: bool) -> "CommunicationPattern":
        """Combination flag only pairs synchronous/asynchronous with parallel."""
        if not parallel:
            return base
        if base is cls.SYNCHRONOUS:
            return cls.SYNCHRONOUS_PARALLEL
        if base is cls.ASYNCHRONOUS:
            return cls.ASYNCHRONOUS_PARALLEL
        if base is cls.PARALLEL:
            return base
        raise ValueError(f"{base.value} cannot combine with parallel")


class TokenKind(str, Enum):
    TASK_HANDOFF = "task-handoff"
    APPROVAL_REQUEST = "approval-request"
    APPROVAL_RESPONSE = "approval-response"
    NOTIFICATION = "notification"


class PolicyStatus(str, Enum):
    ACTIVE = "active"
    TERMINATED = "terminated"


@dataclass(frozen=True)
class Address:
    """Routing address: a registered network and an actor within it."""

    network_id: str
    actor_id: str

    def __post_init__(self):
        if not self.network_id or not self.actor_id:
            raise ValueError("address parts must be non-empty")

    def __str__(self) -> str:
        return f"{self.network_id}/{self.actor_id}"

    @classmethod
    def parse(cls, text: str) -> "Address":
        network_id, sep, actor_id = text.partition("/")
        if not sep:
            raise ValueError(f"address must be 'network/actor': {text!r}")
        return cls(network_id, actor_id)


@dataclass
class PolicyRef:
    policy_id: str
    owner: Address
    status: PolicyStatus = PolicyStatus.ACTIVE


@dataclass(frozen=True)
class LocalToken:
    """Record of a task an actor performed without routing anything."""

    token_id: str
    policy_id: str
    phase_id: str
    goal_id: str
    seq_num: int
    task: str
    task_input: str
    nature_of_task_input: ArtifactNature
    task_output: str
    nature_of_task_output: ArtifactNature
    task_description: str
    who_carried_out: Address
    nature_of_stakeholders: StakeholderNature
    data_details: str
    source_of_evidence: str
    timestamp: int
    data_reference: Optional[str] = None

    def to_record(self) -> dict:
        rec = _flatten(self)
        rec["who_carried_out"] = str(self.who_carried_out)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "LocalToken":
        rec = dict(rec)
        rec["who_carried_out"] = Address.parse(rec["who_carried_out"])
        rec["nature_of_task_input"] = ArtifactNature(rec["nature_of_task_input"])
        rec["nature_of_task_output"] = ArtifactNature(rec["nature_of_task_output"])
        rec["nature_of_stakeholders"] = StakeholderNature(rec["nature_of_stakeholders"])
        return cls(**rec)


@dataclass(frozen=True)
class RoutedToken:
    """Inter-actor message carrying task provenance plus routing addresses."""

    token_id: str
    policy_id: str
    phase_id: str
    goal_id: str
    seq_num: int
    previous_task: str
    previous_task_output: str
    nature_of_task_output: ArtifactNature
    task_description: str
    communication_pattern: CommunicationPattern
    nature_of_stakeholders: StakeholderNature
    data_details: str
    source_of_evidence: str
    communication_with: Address
    timestamp: int
    source_address: Address
    destination_address: Address
    kind: TokenKind
    required_action: Optional[str] = None
    data_reference: Optional[str] = None

    def to_record(self) -> dict:
        rec = _flatten(self)
        for key in ("communication_with", "source_address", "destination_address"):
            rec[key] = str(getattr(self, key))
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "RoutedToken":
        rec = dict(rec)
        for key in ("communication_with", "source_address", "destination_address"):
            rec[key] = Address.parse(rec[key])
        rec["nature_of_task_output"] = ArtifactNature(rec["nature_of_task_output"])
        rec["nature_of_stakeholders"] = StakeholderNature(rec["nature_of_stakeholders"])
        rec["communication_pattern"] = CommunicationPattern(rec["communication_pattern"])
        rec["kind"] = TokenKind(rec["kind"])
        return cls(**rec)


@dataclass(frozen=True)
class DataRecord:
    """Content-addressed payload; data_id is the SHA-256 of the payload."""

    data_id: str
    payload: bytes
    media_hint: str
    created_by: Address
    timestamp: int

    def to_record(self) -> dict:
        return {
            "data_id": self.data_id,
            "media_hint": self.media_hint,
            "created_by": str(self.created_by),
            "timestamp": self.timestamp,
            "size": len(self.payload),
        }


def content_hash(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def _flatten(obj) -> dict:
    rec = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, Enum):
            value = value.value
        rec[f.name] = value
    return rec


@dataclass
class TokenValidation:
    ok: bool
    violations: list = field(default_factory=list)


_LOCAL_MANDATORY = (
    "token_id",
    "policy_id",
    "phase_id",
    "goal_id",
    "task",
    "task_input",
    "task_output",
    "task_description",
    "data_details",
    "source_of_evidence",
)


def validate_local_token(token: LocalToken, defined_goal_ids=None) -> TokenValidation:
    """Check the local-token template invariants; never raises."""
    violations = []
    for name in _LOCAL_MANDATORY:
        if not getattr(token, name):
            violations.append(name)
    if token.seq_num < 1:
        violations.append("seq_num")
    if not token.who_carried_out.network_id or not token.who_carried_out.actor_id:
        violations.append("who_carried_out")
    if defined_goal_ids is not None and token.goal_id and token.goal_id not in defined_goal_ids:
        violations.append("goal_id")
    return TokenValidation(not violations, violations)


_ROUTED_MANDATORY = ("token_id", "policy_id", "task_description")
# Notification tokens are controller plumbing and may precede any goal or task,
# so goal/phase/previous-task slots are only mandatory for the other kinds.
_ROUTED_TASK_MANDATORY = (
    "phase_id",
    "goal_id",
    "previous_task",
    "previous_task_output",
    "data_details",
    "source_of_evidence",
)


def validate_routed_token(token: RoutedToken, defined_goal_ids=None, known_token_ids=None) -> TokenValidation:
    """Check the routed-token template invariants; never raises."""
    violations = []
    for name in _ROUTED_MANDATORY:
        if not getattr(token, name):
            violations.append(name)
    if token.kind is not TokenKind.NOTIFICATION:
        for name in _ROUTED_TASK_MANDATORY:
            if not getattr(token, name):
                violations.append(name)
    if token.seq_num < 1:
        violations.append("seq_num")
    if token.source_address == token.destination_address:
        violations.append("addresses")
    if token.communication_with != token.destination_address:
        violations.append("communication_with")
    if known_token_ids is not None and token.token_id in known_token_ids:
        violations.append("token_id")
    if defined_goal_ids is not None and token.goal_id and token.goal_id not in defined_goal_ids:
        violations.append("goal_id")
    return TokenValidation(not violations, violations)
