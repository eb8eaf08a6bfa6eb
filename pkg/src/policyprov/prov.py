"""Builds a W3C PROV-shaped document from the token log and exports PROV-JSON.

Mapping (our formalization):
  local token   -> one Activity (`act:<policy>/<network>/<seq>`), its actor as
                   Agent (+wasAssociatedWith), task_input/task_output as
                   Entities (+used / +wasGeneratedBy), output derived from input
  routed token  -> one message Entity (`tok:<token_id>`) generated by the
                   sender's previous-task Activity and used by the receiver's
                   next Activity, which wasInformedBy the sender's Activity
Artifacts are identified by canonical name within a policy, so entities named
in multiple tokens unify and the graph connects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import UnknownPolicyError
from .goals import canonical_artifact
from .model import Address, LocalToken, RoutedToken
from .storage import EventLog


@dataclass
class ProvDocument:
    entities: dict = field(default_factory=dict)
    activities: dict = field(default_factory=dict)
    agents: dict = field(default_factory=dict)
    used: list = field(default_factory=list)  # (activity, entity)
    was_generated_by: list = field(default_factory=list)  # (entity, activity)
    was_associated_with: list = field(default_factory=list)  # (activity, agent)
    was_informed_by: list = field(default_factory=list)  # (informed, informant)
    was_derived_from: list = field(default_factory=list)  # (generated, source)

    def add_entity(self, entity_id: str, **attrs) -> str:
        self.entities.setdefault(entity_id, {}).update(
            {k: v for k, v in attrs.items() if v is not None}
        )
        return entity_id

    def add_activity(self, activity_id: str, **attrs) -> str:
        self.activities.setdefault(activity_id, {}).update(
            {k: v for k, v in attrs.items() if v is not None}
        )
        return activity_id

    def add_agent(self, address: Address, **attrs) -> str:
        agent_id = f"agt:{address.network_id}/{address.actor_id}"
        self.agents.setdefault(
            agent_id, {"network": address.network_id, "actor": address.actor_id}
        ).update({k: v for k, v in attrs.items() if v is not None})
        return agent_id

    def relate(self, relation: list, pair: tuple):
        if pair not in relation:
            relation.append(pair)

    def generated_by(self, entity_id: str, activity_id: str) -> bool:
        """At most one generator per entity; the first one wins."""
        if any(e == entity_id for e, _ in self.was_generated_by):
            return False
        self.was_generated_by.append((entity_id, activity_id))
        return True

    def generator_of(self, entity_id: str) -> Optional[str]:
        for ent, act in self.was_generated_by:
            if ent == entity_id:
                return act
        return None


def entity_id_for(policy_id: str, name: str) -> str:
    return f"ent:{policy_id}/{canonical_artifact(name)}"


def activity_id_for(token: LocalToken) -> str:
    return f"act:{token.policy_id}/{token.who_carried_out.network_id}/{token.seq_num}"


class _ActivityIndex:
    """Per-actor, time-ordered local-token activities of one policy."""

    def __init__(self, tokens: list[LocalToken], actor_event_times: dict):
        self.by_actor: dict[str, list[LocalToken]] = {}
        for token in tokens:
            self.by_actor.setdefault(str(token.who_carried_out), []).append(token)
        self._actor_event_times = actor_event_times

    def previous(self, actor: Address, at: int, task: Optional[str] = None) -> Optional[LocalToken]:
        candidates = [t for t in self.by_actor.get(str(actor), ()) if t.timestamp <= at]
        if task:
            matching = [t for t in candidates if t.task == task]
            if matching:
                return matching[-1]
        return candidates[-1] if candidates else None

    def next(self, actor: Address, after: int) -> Optional[LocalToken]:
        for token in self.by_actor.get(str(actor), ()):
            if token.timestamp >= after:
                return token
        return None

    def end_time(self, token: LocalToken) -> int:
        """End = time of the actor's next event, or its own timestamp if terminal."""
        times = self._actor_event_times.get(str(token.who_carried_out), ())
        for t in times:
            if t > token.timestamp:
                return t
        return token.timestamp


def _policy_tokens(log: EventLog, policy_id: str):
    locals_, sends, receives = [], [], {}
    seen_policy = False
    for rec in log:
        if rec.body.get("policy_id") == policy_id:
            seen_policy = True
        else:
            continue
        if rec.event_kind == "local-token":
            locals_.append(LocalToken.from_record(rec.body))
        elif rec.event_kind == "routed-token-send":
            sends.append(RoutedToken.from_record(rec.body))
        elif rec.event_kind == "routed-token-receive":
            receives[rec.body["token_id"]] = rec.logical_time
    if not seen_policy:
        raise UnknownPolicyError(policy_id)
    return locals_, sends, receives


def _make_index(locals_, sends):
    actor_event_times: dict[str, list[int]] = {}
    for token in locals_:
        actor_event_times.setdefault(str(token.who_carried_out), []).append(token.timestamp)
    for token in sends:
        actor_event_times.setdefault(str(token.source_address), []).append(token.timestamp)
    for times in actor_event_times.values():
        times.sort()
    return _ActivityIndex(locals_, actor_event_times)


def _add_local(doc: ProvDocument, token: LocalToken, index: _ActivityIndex):
    act_id = doc.add_activity(
        activity_id_for(token),
        label=token.task,
        task_description=token.task_description,
        phase_id=token.phase_id,
        goal_id=token.goal_id,
        start=token.timestamp,
        end=index.end_time(token),
        source_of_evidence=token.source_of_evidence,
        data_reference=token.data_reference,
    )
    agent_id = doc.add_agent(
        token.who_carried_out, nature_of_stakeholders=token.nature_of_stakeholders.value
    )
    doc.relate(doc.was_associated_with, (act_id, agent_id))
    in_id = doc.add_entity(
        entity_id_for(token.policy_id, token.task_input),
        label=token.task_input,
        nature=token.nature_of_task_input.value,
    )
    doc.relate(doc.used, (act_id, in_id))
    if doc.generator_of(in_id) is None:
        doc.entities[in_id]["external_origin"] = True
    out_id = doc.add_entity(
        entity_id_for(token.policy_id, token.task_output),
        label=token.task_output,
        nature=token.nature_of_task_output.value,
        source_of_evidence=token.source_of_evidence,
        data_reference=token.data_reference,
    )
    if doc.generated_by(out_id, act_id):
        # An earlier external-origin mark stays: it covers uses that predate
        # this generation.
        doc.entities[out_id]["generated_at"] = token.timestamp
    doc.relate(doc.was_derived_from, (out_id, in_id))


def _add_routed(doc: ProvDocument, token: RoutedToken, receive_time, index: _ActivityIndex):
    tok_id = doc.add_entity(
        f"tok:{token.token_id}",
        label=token.previous_task_output or token.task_description,
        kind=token.kind.value,
        task_description=token.task_description,
        required_action=token.required_action,
        communication_pattern=token.communication_pattern.value,
        data_reference=token.data_reference,
    )
    doc.add_agent(token.source_address)
    doc.add_agent(token.destination_address)
    prev = index.previous(token.source_address, token.timestamp, token.previous_task)
    if prev is None:
        doc.entities[tok_id]["external_origin"] = True
    else:
        doc.generated_by(tok_id, activity_id_for(prev))
        doc.entities[tok_id]["generated_at"] = token.timestamp
    if receive_time is None:
        return
    nxt = index.next(token.destination_address, receive_time)
    if nxt is not None:
        doc.relate(doc.used, (activity_id_for(nxt), tok_id))
        if prev is not None:
            doc.relate(doc.was_informed_by, (activity_id_for(nxt), activity_id_for(prev)))


def token_to_prov_fragment(token, index: Optional[_ActivityIndex] = None, receive_time=None) -> ProvDocument:
    """Map one token (or a send/receive pair) to a standalone fragment."""
    doc = ProvDocument()
    if index is None:
        index = _make_index(
            [token] if isinstance(token, LocalToken) else [],
            [token] if isinstance(token, RoutedToken) else [],
        )
    if isinstance(token, LocalToken):
        _add_local(doc, token, index)
    elif isinstance(token, RoutedToken):
        _add_routed(doc, token, receive_time, index)
    else:
        raise TypeError(f"cannot map {type(token).__name__} to provenance")
    return doc


def build_prov(log: EventLog, policy_id: str) -> ProvDocument:
    """Union of fragments over all events of the policy, in time order."""
    locals_, sends, receives = _policy_tokens(log, policy_id)
    index = _make_index(locals_, sends)
    doc = ProvDocument()
    events = [(t.timestamp, 0, t) for t in locals_] + [(t.timestamp, 1, t) for t in sends]
    events.sort(key=lambda item: (item[0], item[1]))
    for _, tag, token in events:
        if tag == 0:
            _add_local(doc, token, index)
        else:
            _add_routed(doc, token, receives.get(token.token_id), index)
    return doc


_PROV_KEYS = (
    "entity",
    "activity",
    "agent",
    "used",
    "wasGeneratedBy",
    "wasAssociatedWith",
    "wasInformedBy",
    "wasDerivedFrom",
)


def export_prov_json(doc: ProvDocument) -> bytes:
    """Deterministic PROV-JSON: one object with exactly the eight members."""
    out: dict = {key: {} for key in _PROV_KEYS}
    out["entity"] = {k: dict(sorted(v.items())) for k, v in sorted(doc.entities.items())}
    out["activity"] = {k: dict(sorted(v.items())) for k, v in sorted(doc.activities.items())}
    out["agent"] = {k: dict(sorted(v.items())) for k, v in sorted(doc.agents.items())}
    for i, (act, ent) in enumerate(sorted(doc.used), 1):
        out["used"][f"u{i}"] = {"prov:activity": act, "prov:entity": ent}
    for i, (ent, act) in enumerate(sorted(doc.was_generated_by), 1):
        out["wasGeneratedBy"][f"gen{i}"] = {"prov:entity": ent, "prov:activity": act}
    for i, (act, agent) in enumerate(sorted(doc.was_associated_with), 1):
        out["wasAssociatedWith"][f"assoc{i}"] = {"prov:activity": act, "prov:agent": agent}
    for i, (informed, informant) in enumerate(sorted(doc.was_informed_by), 1):
        out["wasInformedBy"][f"inf{i}"] = {"prov:informed": informed, "prov:informant": informant}
    for i, (generated, source) in enumerate(sorted(doc.was_derived_from), 1):
        out["wasDerivedFrom"][f"der{i}"] = {
            "prov:generatedEntity": generated,
            "prov:usedEntity": source,
        }
    return json.dumps(out, sort_keys=True, indent=2).encode("utf-8")
