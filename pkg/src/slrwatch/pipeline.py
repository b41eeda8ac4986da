"""The surveillance pipeline: a state machine over an append-only event log.

Each lineage occupies exactly one node. Events drive every node change through
one transition table; pairs outside the table are rejected, never silently
dropped. Because the log records all events and the table is deterministic,
replaying the log reconstructs the live state.

Node map (loop-backs marked):

    VersionControl --versions_linked--> ObtainProtocols
    ObtainProtocols --protocols_obtained--> SnowballWait
    SnowballWait --tick--> SnowballRun
    SnowballRun --no_candidates--> SnowballWait          (loop-back)
    SnowballRun --error--> SnowballWait                  (failed run recovery)
    SnowballRun --candidates_found--> ApplyCriteria
    ApplyCriteria --criteria_applied[potentials=0]--> SnowballWait   (loop-back)
    ApplyCriteria --criteria_applied[potentials>0]--> Persist
    Persist --exported--> Publish
    Publish --deposited--> PostDeployTesting
    PostDeployTesting --session_evaluated[no_update]--> SnowballWait (loop-back)
    PostDeployTesting --session_evaluated[update_needed]--> FinalDeploy
    FinalDeploy --notified--> MonitorAlert
    MonitorAlert --flagged[update_in_progress]--> UpdateInProgress
    UpdateInProgress --update_published--> VersionControl
"""

from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol as TypingProtocol

import requests

from .registry import ReviewStatus

logger = logging.getLogger(__name__)


class Node(str, Enum):
    VERSION_CONTROL = "VersionControl"
    OBTAIN_PROTOCOLS = "ObtainProtocols"
    SNOWBALL_WAIT = "SnowballWait"
    SNOWBALL_RUN = "SnowballRun"
    APPLY_CRITERIA = "ApplyCriteria"
    PERSIST = "Persist"
    PUBLISH = "Publish"
    POST_DEPLOY_TESTING = "PostDeployTesting"
    FINAL_DEPLOY = "FinalDeploy"
    MONITOR_ALERT = "MonitorAlert"
    UPDATE_IN_PROGRESS = "UpdateInProgress"


class EventKind(str, Enum):
    VERSIONS_LINKED = "versions_linked"
    PROTOCOLS_OBTAINED = "protocols_obtained"
    TICK = "tick"
    ITERATION_FINISHED = "iteration_finished"
    CANDIDATES_FOUND = "candidates_found"
    NO_CANDIDATES = "no_candidates"
    CRITERIA_APPLIED = "criteria_applied"
    EXPORTED = "exported"
    DEPOSITED = "deposited"
    SESSION_EVALUATED = "session_evaluated"
    FLAGGED = "flagged"
    NOTIFIED = "notified"
    UPDATE_PUBLISHED = "update_published"
    ERROR = "error"


class TransitionError(RuntimeError):
    """The event kind is not defined for the lineage's current node."""


class FlagError(ValueError):
    """The requested status change is not on the flag cycle."""


@dataclass(frozen=True)
class PipelineEvent:
    seq: int
    lineage_id: str
    kind: EventKind
    payload: dict
    at: str

    def to_dict(self) -> dict:
        return {"seq": self.seq, "lineage_id": self.lineage_id,
                "kind": self.kind.value, "payload": self.payload, "at": self.at}

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineEvent":
        return cls(seq=data["seq"], lineage_id=data["lineage_id"],
                   kind=EventKind(data["kind"]), payload=data["payload"],
                   at=data["at"])


@dataclass(frozen=True)
class PipelineState:
    node: Node
    lineage_id: str
    entered_at: str

    def to_dict(self) -> dict:
        return {"node": self.node.value, "lineage_id": self.lineage_id,
                "entered_at": self.entered_at}

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineState":
        return cls(node=Node(data["node"]), lineage_id=data["lineage_id"],
                   entered_at=data["entered_at"])


def _criteria_target(payload: dict) -> Node:
    # Zero surviving candidates loops back to waiting for the next run.
    return Node.PERSIST if payload.get("potentials", 0) > 0 else Node.SNOWBALL_WAIT


def _session_target(payload: dict) -> Node:
    return (Node.FINAL_DEPLOY if payload.get("outcome") == "update_needed"
            else Node.SNOWBALL_WAIT)


def _monitor_flag_target(payload: dict) -> Node:
    # Researchers accepting the update flag move the lineage into the manual
    # update; any other flag activity observes but does not advance.
    if payload.get("status") == ReviewStatus.UPDATE_IN_PROGRESS.value and not payload.get("noop"):
        return Node.UPDATE_IN_PROGRESS
    return Node.MONITOR_ALERT


_TRANSITIONS: dict[tuple[Node, EventKind], Callable[[dict], Node]] = {
    (Node.VERSION_CONTROL, EventKind.VERSIONS_LINKED): lambda p: Node.OBTAIN_PROTOCOLS,
    (Node.OBTAIN_PROTOCOLS, EventKind.PROTOCOLS_OBTAINED): lambda p: Node.SNOWBALL_WAIT,
    (Node.SNOWBALL_WAIT, EventKind.TICK): lambda p: Node.SNOWBALL_RUN,
    (Node.SNOWBALL_RUN, EventKind.NO_CANDIDATES): lambda p: Node.SNOWBALL_WAIT,
    (Node.SNOWBALL_RUN, EventKind.CANDIDATES_FOUND): lambda p: Node.APPLY_CRITERIA,
    (Node.SNOWBALL_RUN, EventKind.ERROR): lambda p: Node.SNOWBALL_WAIT,
    (Node.APPLY_CRITERIA, EventKind.CRITERIA_APPLIED): _criteria_target,
    (Node.PERSIST, EventKind.EXPORTED): lambda p: Node.PUBLISH,
    (Node.PUBLISH, EventKind.DEPOSITED): lambda p: Node.POST_DEPLOY_TESTING,
    (Node.POST_DEPLOY_TESTING, EventKind.SESSION_EVALUATED): _session_target,
    (Node.FINAL_DEPLOY, EventKind.NOTIFIED): lambda p: Node.MONITOR_ALERT,
    (Node.MONITOR_ALERT, EventKind.FLAGGED): _monitor_flag_target,
    (Node.UPDATE_IN_PROGRESS, EventKind.UPDATE_PUBLISHED): lambda p: Node.VERSION_CONTROL,
}


def defined(node: Node, kind: EventKind) -> bool:
    return (node, kind) in _TRANSITIONS


def next_node(node: Node, kind: EventKind, payload: dict) -> Node:
    try:
        resolve = _TRANSITIONS[(node, kind)]
    except KeyError:
        raise TransitionError(
            f"event {kind.value!r} is not defined at node {node.value}"
        ) from None
    return resolve(payload)


def advance(state: PipelineState, event: PipelineEvent) -> PipelineState:
    """Apply one event to the current state; undefined pairs change nothing."""
    target = next_node(state.node, event.kind, event.payload)
    if target is state.node:
        return state
    return PipelineState(node=target, lineage_id=state.lineage_id, entered_at=event.at)


@dataclass(frozen=True)
class ReplayResult:
    node: Node
    status: ReviewStatus
    last_seq: int
    events: int


def replay(events: list[PipelineEvent],
           initial_node: Node = Node.VERSION_CONTROL,
           initial_status: ReviewStatus = ReviewStatus.UP_TO_DATE) -> ReplayResult:
    """Rebuild node and status from the log alone.

    The log carries informational events too (iteration_finished, receipts,
    error reports away from SnowballRun); those leave the node unchanged.
    Sequence numbers must be gapless from 1.
    """
    node = initial_node
    status = initial_status
    last_seq = 0
    for event in events:
        if event.seq != last_seq + 1:
            raise ValueError(
                f"event log corrupt: seq {event.seq} after {last_seq}"
            )
        last_seq = event.seq
        if defined(node, event.kind):
            node = next_node(node, event.kind, event.payload)
        if event.kind is EventKind.FLAGGED and not event.payload.get("noop"):
            status = ReviewStatus(event.payload["status"])
    return ReplayResult(node=node, status=status, last_seq=last_seq, events=len(events))


# ---------------------------------------------------------------------------
# Status flag cycle

_FLAG_NEXT = {
    ReviewStatus.UP_TO_DATE: ReviewStatus.SUITABLE_FOR_UPDATE,
    ReviewStatus.SUITABLE_FOR_UPDATE: ReviewStatus.UPDATE_IN_PROGRESS,
    ReviewStatus.UPDATE_IN_PROGRESS: ReviewStatus.UP_TO_DATE,
}


def check_flag(current: ReviewStatus, new: ReviewStatus) -> bool:
    """True when the change is a real step on the cycle, False for a no-op.

    Anything else (skipping a stage or walking backwards) raises.
    """
    if new is current:
        return False
    if _FLAG_NEXT[current] is not new:
        raise FlagError(
            f"status {current.value} can only move to {_FLAG_NEXT[current].value}, "
            f"not {new.value}"
        )
    return True


# ---------------------------------------------------------------------------
# Scheduling


@dataclass(frozen=True)
class ScheduleConfig:
    """How often the scheduler wakes a waiting lineage."""

    frequency_minutes: int = 24 * 60
    enabled: bool = True
    window_start: dt.date | None = None  # None derives from lineage coverage
    window_end: dt.date | None = None    # None means "up to now"

    def __post_init__(self) -> None:
        if self.frequency_minutes < 1:
            raise ValueError("frequency must be at least one minute")

    @property
    def frequency(self) -> dt.timedelta:
        return dt.timedelta(minutes=self.frequency_minutes)

    def to_dict(self) -> dict:
        return {
            "frequency_minutes": self.frequency_minutes,
            "enabled": self.enabled,
            "window_start": self.window_start.isoformat() if self.window_start else None,
            "window_end": self.window_end.isoformat() if self.window_end else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScheduleConfig":
        return cls(
            frequency_minutes=data.get("frequency_minutes", 24 * 60),
            enabled=data.get("enabled", True),
            window_start=(dt.date.fromisoformat(data["window_start"])
                          if data.get("window_start") else None),
            window_end=(dt.date.fromisoformat(data["window_end"])
                        if data.get("window_end") else None),
        )


def is_due(last_run: dt.datetime | None, now: dt.datetime,
           config: ScheduleConfig) -> bool:
    if not config.enabled:
        return False
    if last_run is None:
        return True
    return now - last_run >= config.frequency


# ---------------------------------------------------------------------------
# Notification sinks


@dataclass(frozen=True)
class Receipt:
    contact: str
    sink: str
    ok: bool
    detail: str


class NotificationSink(TypingProtocol):
    name: str

    def deliver(self, lineage_id: str, contact: str, message: str) -> Receipt: ...


class FileSink:
    """Appends one line per notification; the file is the outbox."""

    name = "file"

    def __init__(self, path: str):
        self.path = path

    def deliver(self, lineage_id: str, contact: str, message: str) -> Receipt:
        try:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "lineage_id": lineage_id, "contact": contact, "message": message,
                }) + "\n")
        except OSError as exc:
            return Receipt(contact=contact, sink=self.name, ok=False, detail=str(exc))
        return Receipt(contact=contact, sink=self.name, ok=True, detail=self.path)


class WebhookSink:
    """POSTs a structured message to a configured URL, one call per contact."""

    name = "webhook"

    def __init__(self, url: str, transport: Callable[..., object] | None = None):
        self.url = url
        self._transport = transport or requests.post

    def deliver(self, lineage_id: str, contact: str, message: str) -> Receipt:
        body = {"lineage_id": lineage_id, "contact": contact, "message": message}
        try:
            response = self._transport(self.url, json=body, timeout=30)
            status = response.status_code
        except requests.RequestException as exc:
            return Receipt(contact=contact, sink=self.name, ok=False, detail=str(exc))
        if 200 <= status < 300:
            return Receipt(contact=contact, sink=self.name, ok=True,
                           detail=f"HTTP {status}")
        return Receipt(contact=contact, sink=self.name, ok=False,
                       detail=f"HTTP {status}")
