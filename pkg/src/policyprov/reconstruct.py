"""Rebuilds the structured process from the recorded token log.

Produces the ordered task graph per policy, classifies the observed
communication pattern of every routed interaction, and detects phase-level
loop-backs against a configured phase order.

Pattern rules (our operational formalization):
  parallel      >= 2 sends from the same activity before any response
  sequential    single send with no response expected; the receiver acts next
  synchronous   the sender performs no further activity for the policy until
                a response token from the receiver arrives
  asynchronous  the sender performs an activity while a response is pending
  synchronous-/asynchronous-parallel   the combinations of the above
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import UnknownPhaseError, UnknownPolicyError
from .model import CommunicationPattern, LocalToken, RoutedToken, TokenKind
from .storage import EventLog

EDGE_TYPES = {
    TokenKind.TASK_HANDOFF: "handoff",
    TokenKind.APPROVAL_REQUEST: "approval",
    TokenKind.APPROVAL_RESPONSE: "approval",
    TokenKind.NOTIFICATION: "notification",
}


@dataclass(frozen=True)
class ProcessNode:
    node_id: str
    actor: str  # "network/actor"
    task: str
    phase_id: str
    goal_id: str
    seq: int
    time: int


@dataclass
class ProcessEdge:
    token_id: str
    src_actor: str
    dst_actor: str
    edge_type: str  # handoff | approval | notification
    pattern: CommunicationPattern
    time: int
    receive_time: int
    src_node: Optional[str] = None
    dst_node: Optional[str] = None
    kind: TokenKind = TokenKind.TASK_HANDOFF

    @property
    def endpoints(self) -> tuple[str, str]:
        return (self.src_actor, self.dst_actor)


@dataclass
class ProcessGraph:
    policy_id: str
    nodes: list[ProcessNode] = field(default_factory=list)
    edges: list[ProcessEdge] = field(default_factory=list)
    loop_markers: list[tuple[str, str, int]] = field(default_factory=list)

    def node(self, node_id: str) -> ProcessNode:
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)

    def actor_chain(self) -> list[str]:
        """Actor sequence over the time-ordered task edges (handoffs and
        approval requests; responses and notifications return control rather
        than pass the task on), collapsed so consecutive edges sharing an
        endpoint chain up."""
        task_edges = [
            e for e in self.edges
            if e.kind in (TokenKind.TASK_HANDOFF, TokenKind.APPROVAL_REQUEST)
        ]
        chain: list[str] = []
        for edge in sorted(task_edges, key=lambda e: e.time):
            src = edge.src_actor.rpartition("/")[2]
            dst = edge.dst_actor.rpartition("/")[2]
            if not chain:
                chain.append(src)
            elif chain[-1] != src:
                chain.append(src)
            chain.append(dst)
        return chain


def _node_id(token: LocalToken) -> str:
    return f"act:{token.policy_id}/{token.who_carried_out.network_id}/{token.seq_num}"


def _collect(log: EventLog, policy_id: str):
    locals_, sends, receives = [], [], {}
    seen = False
    for rec in log:
        if rec.body.get("policy_id") != policy_id:
            continue
        seen = True
        if rec.event_kind == "local-token":
            locals_.append(LocalToken.from_record(rec.body))
        elif rec.event_kind == "routed-token-send":
            sends.append(RoutedToken.from_record(rec.body))
        elif rec.event_kind == "routed-token-receive":
            receives[rec.body["token_id"]] = rec.logical_time
    if not seen:
        raise UnknownPolicyError(policy_id)
    return locals_, sends, receives


def _classify_sends(locals_: list[LocalToken], sends: list[RoutedToken], receives: dict):
    """Pattern per delivered non-notification send, by the rules above."""
    work_sends = [s for s in sends if s.kind is not TokenKind.NOTIFICATION]
    # Actor timelines: (time, "local"|"send", token), time-ordered.
    timelines: dict[str, list] = {}
    for token in locals_:
        timelines.setdefault(str(token.who_carried_out), []).append((token.timestamp, "local", token))
    for token in work_sends:
        timelines.setdefault(str(token.source_address), []).append((token.timestamp, "send", token))
    for timeline in timelines.values():
        timeline.sort(key=lambda item: item[0])

    patterns: dict[str, CommunicationPattern] = {}
    for actor, timeline in timelines.items():
        i = 0
        while i < len(timeline):
            if timeline[i][1] != "send":
                i += 1
                continue
            group = []
            while i < len(timeline) and timeline[i][1] == "send":
                group.append(timeline[i][2])
                i += 1
            last_send_time = max(t.timestamp for t in group)
            next_act = next((time for time, _, _ in timeline if time > last_send_time), None)
            responses = []
            for sent in group:
                arrival = _first_response(sent, work_sends, receives)
                if arrival is not None:
                    responses.append(arrival)
            if not responses:
                base = CommunicationPattern.SEQUENTIAL
            elif next_act is not None and next_act < min(responses):
                base = CommunicationPattern.ASYNCHRONOUS
            else:
                base = CommunicationPattern.SYNCHRONOUS
            if len(group) >= 2:
                if base is CommunicationPattern.SEQUENTIAL:
                    pattern = CommunicationPattern.PARALLEL
                else:
                    pattern = CommunicationPattern.combine(base, parallel=True)
            else:
                pattern = base
            for sent in group:
                patterns[sent.token_id] = pattern
    return patterns


def _first_response(sent: RoutedToken, sends: list[RoutedToken], receives: dict) -> Optional[int]:
    """Arrival time of the first later token back from the receiver."""
    arrivals = [
        receives[t.token_id]
        for t in sends
        if t.token_id in receives
        and t.source_address == sent.destination_address
        and t.destination_address == sent.source_address
        and t.timestamp > sent.timestamp
    ]
    return min(arrivals) if arrivals else None


def reconstruct_process(
    log: EventLog,
    policy_id: str,
    phase_order: Optional[list[str]] = None,
    include_notifications: bool = False,
) -> ProcessGraph:
    """Node per local-token activity, edge per delivered routed token."""
    locals_, sends, receives = _collect(log, policy_id)
    graph = ProcessGraph(policy_id)
    by_actor: dict[str, list[LocalToken]] = {}
    for token in sorted(locals_, key=lambda t: t.timestamp):
        graph.nodes.append(
            ProcessNode(
                _node_id(token),
                str(token.who_carried_out),
                token.task,
                token.phase_id,
                token.goal_id,
                token.seq_num,
                token.timestamp,
            )
        )
        by_actor.setdefault(str(token.who_carried_out), []).append(token)

    patterns = _classify_sends(locals_, sends, receives)
    for token in sorted(sends, key=lambda t: t.timestamp):
        if token.token_id not in receives:
            continue  # dead letters stay in the log, not in the process graph
        if token.kind is TokenKind.NOTIFICATION and not include_notifications:
            continue
        receive_time = receives[token.token_id]
        src_node = _latest_at(by_actor.get(str(token.source_address), ()), token.timestamp)
        dst_node = _first_after(by_actor.get(str(token.destination_address), ()), receive_time)
        graph.edges.append(
            ProcessEdge(
                token_id=token.token_id,
                src_actor=str(token.source_address),
                dst_actor=str(token.destination_address),
                edge_type=EDGE_TYPES[token.kind],
                pattern=patterns.get(token.token_id, token.communication_pattern),
                time=token.timestamp,
                receive_time=receive_time,
                src_node=_node_id(src_node) if src_node else None,
                dst_node=_node_id(dst_node) if dst_node else None,
                kind=token.kind,
            )
        )
    if phase_order is not None:
        graph.loop_markers = detect_loops(graph, phase_order)
    return graph


def _latest_at(tokens, at: int) -> Optional[LocalToken]:
    candidates = [t for t in tokens if t.timestamp <= at]
    return candidates[-1] if candidates else None


def _first_after(tokens, after: int) -> Optional[LocalToken]:
    for token in tokens:
        if token.timestamp >= after:
            return token
    return None


def classify_pattern(graph: ProcessGraph, node_id: str) -> list[CommunicationPattern]:
    """Patterns of the node's outgoing interactions, in send order."""
    graph.node(node_id)
    return [e.pattern for e in sorted(graph.edges, key=lambda e: e.time) if e.src_node == node_id]


def detect_loops(graph: ProcessGraph, phase_order: list[str]) -> list[tuple[str, str, int]]:
    """Loop marker on each re-entry into a phase earlier than the maximal
    phase already seen for the policy."""
    index = {phase: i for i, phase in enumerate(phase_order)}
    markers: list[tuple[str, str, int]] = []
    max_seen: Optional[int] = None
    previous_phase: Optional[str] = None
    for node in sorted(graph.nodes, key=lambda n: n.time):
        if node.phase_id not in index:
            raise UnknownPhaseError(node.phase_id)
        i = index[node.phase_id]
        if max_seen is not None and i < max_seen and node.phase_id != previous_phase:
            markers.append((phase_order[max_seen], node.phase_id, node.time))
        max_seen = i if max_seen is None else max(max_seen, i)
        previous_phase = node.phase_id
    return markers


@dataclass
class QueryResult:
    events: list
    subgraph: ProcessGraph


def query(
    log: EventLog,
    policy_id: Optional[str] = None,
    goal_id: Optional[str] = None,
    phase_id: Optional[str] = None,
    actor: Optional[str] = None,
) -> QueryResult:
    """Scan-and-filter over the log plus the induced subgraph of matches."""
    events = log.scan(policy_id=policy_id, goal_id=goal_id, phase_id=phase_id, actor=actor)
    policies = sorted({rec.body["policy_id"] for rec in events if "policy_id" in rec.body})
    nodes: list[ProcessNode] = []
    edges: list[ProcessEdge] = []
    for pid in policies:
        graph = reconstruct_process(log, pid)
        matched = [
            n
            for n in graph.nodes
            if (goal_id is None or n.goal_id == goal_id)
            and (phase_id is None or n.phase_id == phase_id)
            and (actor is None or n.actor == actor or n.actor.rpartition("/")[2] == actor)
        ]
        matched_ids = {n.node_id for n in matched}
        nodes.extend(matched)
        edges.extend(
            e for e in graph.edges if e.src_node in matched_ids and e.dst_node in matched_ids
        )
    return QueryResult(events, ProcessGraph(policy_id or ",".join(policies), nodes, edges))


def to_dot(graph: ProcessGraph) -> str:
    """DOT export: nodes labeled `actor\\ntask`, edges labeled with pattern."""
    lines = ["digraph process {"]
    for node in sorted(graph.nodes, key=lambda n: n.time):
        actor = node.actor.rpartition("/")[2]
        lines.append(f'  "{node.node_id}" [label="{actor}\\n{node.task}"];')
    for edge in sorted(graph.edges, key=lambda e: e.time):
        src = f'"{edge.src_node or edge.src_actor}"'
        dst = f'"{edge.dst_node or edge.dst_actor}"'
        lines.append(f"  {src} -> {dst} [label=\"{edge.pattern.value}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"
