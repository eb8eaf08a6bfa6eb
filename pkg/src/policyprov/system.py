"""Facade wiring the clock, log, data store, goal engine and network engine."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from .goals import GoalEngine
from .model import Address, DEFAULT_PHASES, PolicyRef, content_hash
from .network import NetworkEngine
from .storage import DataStore, EventLog, LogicalClock


class PolicySystem:
    """One provenance-tracked policy environment (all networks, one log)."""

    def __init__(
        self,
        phases=DEFAULT_PHASES,
        seed: int = 0,
        owner: Optional[Address] = None,
        log_path: Optional[Path] = None,
        data_root: Optional[Path] = None,
    ):
        self.clock = LogicalClock()
        self.log = EventLog(log_path)
        self.store = DataStore(self.log, self.clock, data_root)
        self.policies: dict[str, PolicyRef] = {}
        self.goals = GoalEngine(self.log, self.clock, self.policies, tuple(phases))
        self.network = NetworkEngine(
            self.log, self.clock, self.store, self.policies, self.goals, seed=seed, owner=owner
        )

    # Registry / routing shortcuts.
    def register_network(self, network_id):
        return self.network.register_network(network_id)

    def register_actor(self, network_id, actor_id):
        return self.network.register_actor(network_id, actor_id)

    def link_networks(self, a, b):
        return self.network.link_networks(a, b)

    def put_data(self, payload: bytes, by: Address, media_hint: str = ""):
        new = content_hash(payload) not in self.store
        record = self.store.put(payload, by, media_hint)
        if new:
            self.goals.evaluate_event(record)
        return record

    def notify_new_policy(self, submission, from_addr):
        return self.network.notify_new_policy(submission, from_addr)

    def create_local_token(self, actor, policy_id, **fields):
        return self.network.create_local_token(actor, policy_id, **fields)

    def send_token(self, actor, policy_id, destination, **fields):
        return self.network.send_token(actor, policy_id, destination=destination, **fields)

    def define_goal(self, policy_id, phase, name, metrics, by, goal_id=None):
        return self.goals.define_goal(self.policies[policy_id], phase, name, metrics, by, goal_id)

    def modify_goal(self, policy_id, goal_id, change, by):
        return self.goals.modify_goal(self.policies[policy_id], goal_id, change, by)

    def decide_continuation(self, policy_id, decision, by):
        return self.goals.decide_continuation(self.policies[policy_id], decision, by)

    def goal_display_snapshot(self, policy_id, upto=None):
        return self.goals.goal_display_snapshot(policy_id, upto=upto)

    def close(self):
        self.log.close()
