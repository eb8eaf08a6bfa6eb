"""Append-only event log and content-addressed data store.

The log is the single source of truth: every token, goal event, decision and
receipt lands here, and all downstream state is a fold over it. On-disk form
is UTF-8 JSON Lines, one record per line; the data store is a directory of
files named by payload hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

from .errors import UnknownDataIdError
from .model import Address, DataRecord, content_hash

EVENT_KINDS = (
    "local-token",
    "routed-token-send",
    "routed-token-receive",
    "goal-defined",
    "goal-modified",
    "metric-satisfied",
    "goal-satisfied",
    "decision",
    "receipt",
    "data-stored",
)

_ADDRESS_FIELDS = (
    "who_carried_out",
    "source_address",
    "destination_address",
    "created_by",
    "by",
)


class LogicalClock:
    """Monotonic tick counter; the only time source in the system."""

    def __init__(self, start: int = 0):
        self._now = start

    @property
    def now(self) -> int:
        return self._now

    def tick(self) -> int:
        self._now += 1
        return self._now


@dataclass(frozen=True)
class EventRecord:
    offset: int
    event_kind: str
    logical_time: int
    body: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "offset": self.offset,
                "event_kind": self.event_kind,
                "logical_time": self.logical_time,
                "body": self.body,
            },
            sort_keys=True,
            separators=(",", ":"),
        )


def _actor_matches(body: dict, actor: str) -> bool:
    for key in _ADDRESS_FIELDS:
        value = body.get(key)
        if not isinstance(value, str):
            continue
        if value == actor or value.rpartition("/")[2] == actor:
            return True
    return False


class EventLog:
    """Single-writer append-only log; offsets are dense from 0."""

    def __init__(self, path: Optional[Path] = None):
        self._records: list[EventRecord] = []
        self._path = Path(path) if path else None
        self._fh = None
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self._path.open("w", encoding="utf-8")

    def append(self, event_kind: str, body: dict, logical_time: int) -> int:
        if event_kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {event_kind}")
        record = EventRecord(len(self._records), event_kind, logical_time, body)
        self._records.append(record)
        if self._fh is not None:
            self._fh.write(record.to_json() + "\n")
            self._fh.flush()
        return record.offset

    def scan(
        self,
        policy_id: Optional[str] = None,
        goal_id: Optional[str] = None,
        phase_id: Optional[str] = None,
        actor: Optional[str] = None,
        event_kind: Optional[str] = None,
        offset_range: Optional[tuple[int, int]] = None,
    ) -> list[EventRecord]:
        """Exact-match conjunction over the filters, in offset order."""
        out = []
        for rec in self._records:
            if offset_range is not None and not (offset_range[0] <= rec.offset <= offset_range[1]):
                continue
            if event_kind is not None and rec.event_kind != event_kind:
                continue
            body = rec.body
            if policy_id is not None and body.get("policy_id") != policy_id:
                continue
            if goal_id is not None and body.get("goal_id") != goal_id:
                continue
            if phase_id is not None and body.get("phase_id") != phase_id:
                continue
            if actor is not None and not _actor_matches(body, actor):
                continue
            out.append(rec)
        return out

    def __iter__(self) -> Iterator[EventRecord]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, offset: int) -> EventRecord:
        return self._records[offset]

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        for rec in self._records:
            digest.update(rec.to_json().encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    @classmethod
    def load(cls, path) -> "EventLog":
        log = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                raw = json.loads(line)
                log._records.append(
                    EventRecord(raw["offset"], raw["event_kind"], raw["logical_time"], raw["body"])
                )
        return log


class DataStore:
    """Content-addressed store; put is idempotent for identical bytes."""

    def __init__(self, log: EventLog, clock: LogicalClock, root: Optional[Path] = None):
        self._log = log
        self._clock = clock
        self._root = Path(root) if root else None
        self._records: dict[str, DataRecord] = {}
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)

    def put(self, payload: bytes, by: Address, media_hint: str = "") -> DataRecord:
        data_id = content_hash(payload)
        if data_id in self._records:
            return self._records[data_id]
        record = DataRecord(data_id, payload, media_hint, by, self._clock.tick())
        self._records[data_id] = record
        if self._root is not None:
            (self._root / data_id).write_bytes(payload)
        self._log.append("data-stored", record.to_record(), record.timestamp)
        return record

    def get(self, data_id: str) -> DataRecord:
        try:
            return self._records[data_id]
        except KeyError:
            raise UnknownDataIdError(data_id) from None

    def __contains__(self, data_id: str) -> bool:
        return data_id in self._records
