"""Scripted multi-network simulation: scenario files, deterministic scheduler.

Actors are driven by ordered condition->actions rules. Delivery is synchronous
inside the scheduler, reactions run in FIFO order, and time triggers fire only
when no reaction is pending, so a (scenario, seed) pair always replays to a
byte-identical event log.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import RunawayScenarioError, ScenarioError
from .goals import Metric, MetricKind
from .model import Address, ArtifactNature, CommunicationPattern, RoutedToken, TokenKind
from .system import PolicySystem


@dataclass
class Rule:
    actor: Address
    trigger: dict
    actions: list[dict]
    once: bool = True
    rule_id: int = 0

    def matches(self, token: RoutedToken) -> bool:
        cond = self.trigger.get("on_receive")
        if cond is None:
            return False
        if token.destination_address != self.actor:
            return False
        if "kind" in cond and token.kind.value != cond["kind"]:
            return False
        if "from" in cond and str(token.source_address) != cond["from"]:
            return False
        if "required_action" in cond and token.required_action != cond["required_action"]:
            return False
        if "task_description_contains" in cond and cond[
            "task_description_contains"
        ] not in token.task_description:
            return False
        return True


@dataclass
class Scenario:
    name: str
    networks: dict[str, list[str]]
    links: list[tuple[str, str]]
    owner: Address
    phases: tuple[str, ...]
    goal_defs: dict[str, dict]
    rules: list[Rule]
    seed: int = 0
    expected: dict = field(default_factory=dict)

    @property
    def addresses(self) -> set[str]:
        return {f"{net}/{actor}" for net, actors in self.networks.items() for actor in actors}


@dataclass
class RunTrace:
    """Summary of one run; everything here is derivable from the log alone."""

    log: object
    offsets: list[int]
    network_message_counts: dict[str, int]
    goal_snapshots: dict[str, dict]
    receipt_summary: dict[str, int]
    log_hash: str


def load_scenario(source: Union[str, Path, dict]) -> Scenario:
    """Parse and fully validate a scenario; all cross-references resolved."""
    if isinstance(source, dict):
        raw = source
    else:
        try:
            raw = json.loads(Path(source).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"parse error at line {exc.lineno}: {exc.msg}") from exc

    networks: dict[str, list[str]] = {}
    for net in raw.get("networks", []):
        actors = net.get("actors", [])
        if len(set(actors)) != len(actors):
            raise ScenarioError(f"duplicate actor ids in network {net['id']}")
        if net["id"] in networks:
            raise ScenarioError(f"duplicate network id {net['id']}")
        networks[net["id"]] = list(actors)

    phases = tuple(raw.get("phases", ("agenda-setting", "analysis")))
    declared = {f"{n}/{a}" for n, actors in networks.items() for a in actors}

    def resolve(text: str, context: str) -> Address:
        if text not in declared:
            raise ScenarioError(f"unresolved address {text!r} in {context}")
        return Address.parse(text)

    owner = None
    if raw.get("owner"):
        owner = resolve(raw["owner"], "owner")

    goal_defs = {}
    for ref, spec in raw.get("goals", {}).items():
        if spec["phase"] not in phases:
            raise ScenarioError(f"goal {ref} uses unknown phase {spec['phase']}")
        for metric in spec.get("metrics", []):
            if metric["kind"] == "approval":
                resolve(metric["approver"], f"goal {ref}")
        goal_defs[ref] = spec

    rules: list[Rule] = []
    for behavior in raw.get("behaviors", []):
        actor = resolve(behavior["actor"], "behaviors")
        for rule_raw in behavior.get("rules", []):
            trigger = rule_raw.get("trigger", {})
            if "on_receive" not in trigger and "at_time" not in trigger:
                raise ScenarioError(f"rule for {actor} has no trigger")
            if "from" in trigger.get("on_receive", {}):
                resolve(trigger["on_receive"]["from"], f"rule for {actor}")
            for action in rule_raw.get("actions", []):
                if action["do"] == "send_token":
                    resolve(action["to"], f"rule for {actor}")
                elif action["do"] == "define_goal" and action["goal"] not in goal_defs:
                    raise ScenarioError(f"rule for {actor} references unknown goal {action['goal']}")
            rules.append(
                Rule(actor, trigger, list(rule_raw.get("actions", [])), rule_raw.get("once", True), len(rules))
            )

    links = []
    for a, b in raw.get("links", []):
        if a not in networks or b not in networks:
            raise ScenarioError(f"link references unknown network: {a} <-> {b}")
        links.append((a, b))

    return Scenario(
        name=raw.get("name", "scenario"),
        networks=networks,
        links=links,
        owner=owner,
        phases=phases,
        goal_defs=goal_defs,
        rules=rules,
        seed=raw.get("seed", 0),
        expected=raw.get("expected", {}),
    )


def _metrics_from(spec: dict) -> list[Metric]:
    metrics = []
    for i, m in enumerate(spec.get("metrics", []), 1):
        metric_id = m.get("metric_id", f"{spec['goal_id']}-m{i}")
        if m["kind"] == "artifact-delivery":
            metrics.append(Metric(metric_id, MetricKind.ARTIFACT_DELIVERY, artifact_key=m["artifact"]))
        else:
            metrics.append(Metric(metric_id, MetricKind.APPROVAL, approver=Address.parse(m["approver"])))
    return metrics


class _Runner:
    def __init__(self, scenario: Scenario, system: PolicySystem, step_budget: int):
        self.scenario = scenario
        self.system = system
        self.step_budget = step_budget
        self.pending: deque = deque()
        self.fired: set[int] = set()
        self.time_rules = sorted(
            (r for r in scenario.rules if "at_time" in r.trigger),
            key=lambda r: (r.trigger["at_time"], r.rule_id),
        )
        self.receive_rules = [r for r in scenario.rules if "on_receive" in r.trigger]
        system.network.on_delivered = self._on_delivered

    def _on_delivered(self, token: RoutedToken):
        for rule in self.receive_rules:
            if rule.rule_id in self.fired and rule.once:
                continue
            if rule.matches(token):
                if rule.once:
                    self.fired.add(rule.rule_id)
                self.pending.append((rule, token))

    def run(self):
        steps = 0
        time_rules = deque(self.time_rules)
        while self.pending or time_rules:
            steps += 1
            if steps > self.step_budget:
                descriptions = [self._describe(r) for r, _ in self.pending]
                descriptions += [self._describe(r) for r in time_rules]
                raise RunawayScenarioError(descriptions)
            if self.pending:
                rule, token = self.pending.popleft()
            else:
                rule, token = time_rules.popleft(), None
                if rule.once:
                    self.fired.add(rule.rule_id)
            self._execute(rule, token)

    @staticmethod
    def _describe(rule: Rule) -> str:
        return f"{rule.actor}:{json.dumps(rule.trigger, sort_keys=True)}"

    def _execute(self, rule: Rule, token: Optional[RoutedToken]):
        system = self.system
        policy_id = token.policy_id if token is not None else _first_policy(system)
        for action in rule.actions:
            do = action["do"]
            if do == "submit_policy":
                record = system.put_data(
                    action.get("payload", "").encode("utf-8"), rule.actor, action.get("media_hint", "")
                )
                policy, _, _ = system.notify_new_policy(record, rule.actor)
                policy_id = policy.policy_id
            elif do == "put_data":
                system.put_data(
                    action.get("payload", "").encode("utf-8"), rule.actor, action.get("media_hint", "")
                )
            elif do == "define_goal":
                spec = self.scenario.goal_defs[action["goal"]]
                system.define_goal(
                    policy_id,
                    spec["phase"],
                    spec["name"],
                    _metrics_from(spec),
                    by=rule.actor,
                    goal_id=spec.get("goal_id"),
                )
            elif do == "local_token":
                system.create_local_token(
                    rule.actor,
                    policy_id,
                    task=action["task"],
                    task_input=action.get("task_input", ""),
                    task_output=action.get("task_output", ""),
                    task_description=action.get("task_description", action["task"]),
                    nature_of_task_input=ArtifactNature(action.get("nature_of_task_input", "document")),
                    nature_of_task_output=ArtifactNature(action.get("nature_of_task_output", "document")),
                    data_details=action.get("data_details", ""),
                    source_of_evidence=action.get("source_of_evidence", ""),
                    data_reference=action.get("data_reference"),
                    goal_id=action.get("goal_id"),
                    phase_id=action.get("phase_id"),
                )
            elif do == "send_token":
                system.send_token(
                    rule.actor,
                    policy_id,
                    destination=Address.parse(action["to"]),
                    kind=TokenKind(action.get("kind", "task-handoff")),
                    previous_task=action.get("previous_task", ""),
                    previous_task_output=action.get("previous_task_output", ""),
                    nature_of_task_output=ArtifactNature(action.get("nature_of_task_output", "document")),
                    task_description=action.get("task_description", ""),
                    required_action=action.get("required_action"),
                    communication_pattern=CommunicationPattern(
                        action.get("communication_pattern", "sequential")
                    ),
                    data_details=action.get("data_details", ""),
                    source_of_evidence=action.get("source_of_evidence", ""),
                    goal_id=action.get("goal_id"),
                    phase_id=action.get("phase_id"),
                )
            elif do == "decide":
                system.decide_continuation(policy_id, action["decision"], by=rule.actor)
            else:
                raise ScenarioError(f"unknown action {do!r}")


def _first_policy(system: PolicySystem) -> Optional[str]:
    return next(iter(system.policies), None)


def run(
    scenario: Scenario,
    seed: Optional[int] = None,
    step_budget: int = 1000,
    log_path: Optional[Path] = None,
    data_root: Optional[Path] = None,
) -> RunTrace:
    """Execute the scheduler to quiescence and summarize the run."""
    system = build_system(scenario, seed=seed, log_path=log_path, data_root=data_root)
    try:
        _Runner(scenario, system, step_budget).run()
    finally:
        system.close()
    return trace_of(system)


def build_system(
    scenario: Scenario,
    seed: Optional[int] = None,
    log_path: Optional[Path] = None,
    data_root: Optional[Path] = None,
) -> PolicySystem:
    system = PolicySystem(
        phases=scenario.phases,
        seed=scenario.seed if seed is None else seed,
        owner=scenario.owner,
        log_path=log_path,
        data_root=data_root,
    )
    for network_id, actors in scenario.networks.items():
        system.register_network(network_id)
        for actor_id in actors:
            system.register_actor(network_id, actor_id)
    for a, b in scenario.links:
        system.link_networks(a, b)
    return system


def trace_of(system: PolicySystem) -> RunTrace:
    log = system.log
    message_counts: Counter = Counter()
    receipt_summary: Counter = Counter()
    for rec in log:
        if rec.event_kind == "routed-token-send":
            message_counts[rec.body["source_address"].partition("/")[0]] += 1
        elif rec.event_kind == "receipt":
            receipt_summary[rec.body["outcome"]] += 1
    snapshots = {
        policy_id: system.goal_display_snapshot(policy_id).to_record()
        for policy_id in system.policies
    }
    return RunTrace(
        log=log,
        offsets=[rec.offset for rec in log],
        network_message_counts=dict(message_counts),
        goal_snapshots=snapshots,
        receipt_summary=dict(receipt_summary),
        log_hash=log.content_hash(),
    )


def trace_report(trace: RunTrace) -> str:
    """Chronological `A → B: kind (task)` listing, one line per delivery."""
    lines = []
    for rec in trace.log:
        if rec.event_kind != "routed-token-receive":
            continue
        body = rec.body
        src = body["source_address"].rpartition("/")[2]
        dst = body["destination_address"].rpartition("/")[2]
        line = f"{src} → {dst}: {body['kind']}"
        if body.get("task_description"):
            line += f" ({body['task_description']})"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")
