"""Candidate screening: automatic prescreen, then human decisions.

Candidates survive the prescreen when they match more inclusion than exclusion
expressions. Survivors wait for one verdict per required reviewer; unanimity
settles them, disagreement parks them for consensus. Decisions are append-only:
a reviewer who changes their mind adds a new decision, and the old one stays
in the log with an audit entry pointing at the replacement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable

from .biblio import StudyRecord, fingerprint
from .registry import Protocol
from .rules import matches_record, parse_expression


class CandidateState(str, Enum):
    DISCOVERED = "discovered"
    PRESCREENED = "prescreened"
    NEEDS_CONSENSUS = "needs_consensus"
    INCLUDED = "included"
    EXCLUDED = "excluded"
    DEPOSITED = "deposited"


class Verdict(str, Enum):
    INCLUDE = "include"
    EXCLUDE = "exclude"


class Resolution(str, Enum):
    AUTO = "auto"
    UNANIMOUS = "unanimous"
    CONSENSUS = "consensus"


class ScreeningError(ValueError):
    """A decision or transition is not allowed in the candidate's state."""


@dataclass(frozen=True)
class Decision:
    seq: int
    reviewer: str
    verdict: Verdict
    criteria: tuple[str, ...]
    rationale: str | None
    at: str
    is_consensus: bool = False

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "reviewer": self.reviewer,
            "verdict": self.verdict.value,
            "criteria": list(self.criteria),
            "rationale": self.rationale,
            "at": self.at,
            "is_consensus": self.is_consensus,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Decision":
        return cls(
            seq=data["seq"],
            reviewer=data["reviewer"],
            verdict=Verdict(data["verdict"]),
            criteria=tuple(data["criteria"]),
            rationale=data.get("rationale"),
            at=data["at"],
            is_consensus=data.get("is_consensus", False),
        )


@dataclass(frozen=True)
class AuditEvent:
    at: str
    actor: str
    action: str
    detail: str

    def to_dict(self) -> dict:
        return {"at": self.at, "actor": self.actor, "action": self.action,
                "detail": self.detail}

    @classmethod
    def from_dict(cls, data: dict) -> "AuditEvent":
        return cls(**data)


@dataclass(frozen=True)
class Candidate:
    record: StudyRecord
    state: CandidateState
    iteration: str
    seeds: tuple[str, ...] = ()
    score: int = 0
    matched_inclusion: tuple[str, ...] = ()
    matched_exclusion: tuple[str, ...] = ()
    title_only: bool = False
    trend: bool = False
    resolution: Resolution | None = None
    decisions: tuple[Decision, ...] = ()
    audit: tuple[AuditEvent, ...] = ()

    def active_decisions(self) -> dict[str, Decision]:
        """Latest decision per reviewer; earlier ones are replaced history."""
        active: dict[str, Decision] = {}
        for d in self.decisions:
            active[d.reviewer] = d
        return active

    def to_dict(self) -> dict:
        return {
            "record": self.record.to_dict(),
            "state": self.state.value,
            "iteration": self.iteration,
            "seeds": list(self.seeds),
            "score": self.score,
            "matched_inclusion": list(self.matched_inclusion),
            "matched_exclusion": list(self.matched_exclusion),
            "title_only": self.title_only,
            "trend": self.trend,
            "resolution": self.resolution.value if self.resolution else None,
            "decisions": [d.to_dict() for d in self.decisions],
            "audit": [a.to_dict() for a in self.audit],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Candidate":
        return cls(
            record=StudyRecord.from_dict(data["record"]),
            state=CandidateState(data["state"]),
            iteration=data["iteration"],
            seeds=tuple(data.get("seeds") or ()),
            score=data["score"],
            matched_inclusion=tuple(data["matched_inclusion"]),
            matched_exclusion=tuple(data["matched_exclusion"]),
            title_only=data.get("title_only", False),
            trend=data["trend"],
            resolution=Resolution(data["resolution"]) if data.get("resolution") else None,
            decisions=tuple(Decision.from_dict(d) for d in data["decisions"]),
            audit=tuple(AuditEvent.from_dict(a) for a in data["audit"]),
        )


def _audited(candidate: Candidate, at: str, actor: str, action: str, detail: str) -> Candidate:
    entry = AuditEvent(at=at, actor=actor, action=action, detail=detail)
    return replace(candidate, audit=candidate.audit + (entry,))


def rule_scorer(
    record: StudyRecord, protocol: Protocol
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Default scorer: evaluate each criterion expression against the record.

    Returns (matched inclusion ids, matched exclusion ids). Swap in a trained
    classifier by passing any callable with this signature to `prescreen`.
    """
    matched_inc = tuple(
        c.id for c in protocol.inclusion
        if c.expression and matches_record(parse_expression(c.expression), record)
    )
    matched_exc = tuple(
        c.id for c in protocol.exclusion
        if c.expression and matches_record(parse_expression(c.expression), record)
    )
    return matched_inc, matched_exc


Scorer = Callable[[StudyRecord, Protocol], tuple[tuple[str, ...], tuple[str, ...]]]


def prescreen(
    record: StudyRecord,
    protocol: Protocol,
    iteration: str,
    at: str,
    seeds: tuple[str, ...] = (),
    auto_exclude_unmatched: bool = True,
    scorer: Scorer = rule_scorer,
) -> Candidate:
    """Score a discovered record against the protocol's criterion expressions.

    The raw score is matched inclusion expressions minus matched exclusion
    expressions, floored at zero for queue ordering; only a positive raw score
    survives to human screening when auto-exclusion is on. Auto-exclusion
    needs at least one inclusion expression to exist, otherwise nothing could
    ever survive and every candidate goes to the reviewers. A record with
    neither abstract nor keywords is scored on its title alone and flagged.
    """
    matched_inc, matched_exc = scorer(record, protocol)
    raw = len(matched_inc) - len(matched_exc)
    has_inclusion_expressions = any(c.expression for c in protocol.inclusion)
    title_only = record.abstract is None and not record.keywords
    candidate = Candidate(
        record=record,
        state=CandidateState.PRESCREENED,
        iteration=iteration,
        seeds=seeds,
        score=max(0, raw),
        matched_inclusion=matched_inc,
        matched_exclusion=matched_exc,
        title_only=title_only,
    )
    note = " (title-only evaluation)" if title_only else ""
    if auto_exclude_unmatched and has_inclusion_expressions and raw <= 0:
        candidate = replace(candidate, state=CandidateState.EXCLUDED,
                            resolution=Resolution.AUTO)
        return _audited(
            candidate, at, "prescreen", "auto_excluded",
            f"matched inclusion {list(matched_inc)} vs exclusion {list(matched_exc)}{note}",
        )
    return _audited(
        candidate, at, "prescreen", "prescreened",
        f"score {candidate.score}{note}",
    )


def _validate_criteria(
    verdict: Verdict, criteria: tuple[str, ...], protocol: Protocol
) -> None:
    for cid in criteria:
        protocol.criterion(cid)
    if verdict is Verdict.EXCLUDE:
        exclusion_ids = {c.id for c in protocol.exclusion}
        if not any(cid in exclusion_ids for cid in criteria):
            raise ScreeningError("an exclude decision must cite an exclusion criterion")


def record_decision(
    candidate: Candidate,
    reviewer: str,
    verdict: Verdict,
    protocol: Protocol,
    at: str,
    criteria: tuple[str, ...] = (),
    rationale: str | None = None,
    required_reviewers: int = 2,
) -> Candidate:
    """Add one reviewer's verdict; settle the candidate once quorum is reached."""
    if candidate.state is not CandidateState.PRESCREENED:
        raise ScreeningError(
            f"{candidate.record.id}: decisions are only accepted while prescreened, "
            f"not in state {candidate.state.value}"
        )
    if not reviewer.strip():
        raise ScreeningError("reviewer must be non-empty")
    _validate_criteria(verdict, criteria, protocol)

    decision = Decision(
        seq=len(candidate.decisions) + 1,
        reviewer=reviewer,
        verdict=verdict,
        criteria=criteria,
        rationale=rationale,
        at=at,
    )
    previous = candidate.active_decisions().get(reviewer)
    candidate = replace(candidate, decisions=candidate.decisions + (decision,))
    if previous is not None:
        candidate = _audited(
            candidate, at, reviewer, "decision_replaced",
            f"decision {previous.seq} superseded by {decision.seq}",
        )
    candidate = _audited(
        candidate, at, reviewer, "decision_recorded",
        f"{verdict.value} ({decision.seq})",
    )

    active = candidate.active_decisions()
    if len(active) < required_reviewers:
        return candidate
    verdicts = {d.verdict for d in active.values()}
    if len(verdicts) > 1:
        candidate = replace(candidate, state=CandidateState.NEEDS_CONSENSUS)
        return _audited(
            candidate, at, "screening", "conflict_detected",
            "reviewers disagree: " + ", ".join(
                f"{r}={d.verdict.value}" for r, d in sorted(active.items())
            ),
        )
    settled = verdicts.pop()
    state = (CandidateState.INCLUDED if settled is Verdict.INCLUDE
             else CandidateState.EXCLUDED)
    candidate = replace(candidate, state=state, resolution=Resolution.UNANIMOUS)
    return _audited(candidate, at, "screening", "settled",
                    f"unanimous {settled.value}")


def resolve_consensus(
    candidate: Candidate,
    resolver: str,
    verdict: Verdict,
    protocol: Protocol,
    at: str,
    criteria: tuple[str, ...] = (),
    rationale: str | None = None,
) -> Candidate:
    """Settle a conflicted candidate. Only valid after a detected disagreement."""
    if candidate.state is not CandidateState.NEEDS_CONSENSUS:
        raise ScreeningError(
            f"{candidate.record.id}: consensus applies only to conflicted candidates"
        )
    _validate_criteria(verdict, criteria, protocol)
    conflicted = ", ".join(
        f"{r}={d.verdict.value}"
        for r, d in sorted(candidate.active_decisions().items())
    )
    decision = Decision(
        seq=len(candidate.decisions) + 1,
        reviewer=resolver,
        verdict=verdict,
        criteria=criteria,
        rationale=rationale,
        at=at,
        is_consensus=True,
    )
    state = (CandidateState.INCLUDED if verdict is Verdict.INCLUDE
             else CandidateState.EXCLUDED)
    candidate = replace(
        candidate,
        decisions=candidate.decisions + (decision,),
        state=state,
        resolution=Resolution.CONSENSUS,
    )
    return _audited(candidate, at, resolver, "consensus_resolved",
                    f"{verdict.value} over conflict [{conflicted}]")


def mark_trend(
    candidate: Candidate, actor: str, at: str,
    note: str | None = None, flagged: bool = True,
) -> Candidate:
    """Flag (or unflag) a candidate as a trend signal, whatever its verdict.

    Every change lands in the audit trail, so flag-then-unflag leaves both.
    """
    if candidate.state is CandidateState.DISCOVERED:
        raise ScreeningError(f"{candidate.record.id}: prescreen before marking trends")
    if candidate.trend == flagged:
        raise ScreeningError(
            f"{candidate.record.id}: trend flag is already {flagged}"
        )
    candidate = replace(candidate, trend=flagged)
    action = "trend_marked" if flagged else "trend_unmarked"
    return _audited(candidate, at, actor, action, note or "")


def mark_deposited(candidate: Candidate, at: str, deposit_ref: str) -> Candidate:
    if candidate.state is not CandidateState.INCLUDED:
        raise ScreeningError(
            f"{candidate.record.id}: only included candidates can be deposited"
        )
    candidate = replace(candidate, state=CandidateState.DEPOSITED)
    return _audited(candidate, at, "deposit", "deposited", deposit_ref)


def screening_queue(candidates: list[Candidate]) -> list[Candidate]:
    """Candidates awaiting human attention, most promising first.

    Order: score descending, then year descending (newest first), then
    fingerprint ascending as the deterministic tiebreak.
    """
    open_states = (CandidateState.PRESCREENED, CandidateState.NEEDS_CONSENSUS)
    waiting = [c for c in candidates if c.state in open_states]
    return sorted(
        waiting,
        key=lambda c: (-c.score, -c.record.year, fingerprint(c.record).value),
    )
