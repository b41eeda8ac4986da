"""Update-decision sessions: seven ordered questions deciding a review's fate.

A session walks a configured checklist in index order. Gate steps can
short-circuit: answering one with its disqualifying answer ends the session
immediately with outcome no_update, leaving later steps unanswered. If every
step gets answered without tripping a gate, the outcome is update_needed.
"not applicable" never disqualifies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources

STEP_COUNT = 7


class Answer(str, Enum):
    YES = "yes"
    NO = "no"
    NOT_APPLICABLE = "not_applicable"


class Outcome(str, Enum):
    PENDING = "pending"
    UPDATE_NEEDED = "update_needed"
    NO_UPDATE = "no_update"


class DecisionError(ValueError):
    """A session operation violates the checklist rules."""


@dataclass(frozen=True)
class StepConfig:
    index: int
    question: str
    gate: bool
    disqualifies_on: Answer

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise DecisionError(f"step {self.index}: question must be non-empty")
        if self.disqualifies_on is Answer.NOT_APPLICABLE:
            raise DecisionError(
                f"step {self.index}: not_applicable can never disqualify"
            )

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "question": self.question,
            "gate": self.gate,
            "disqualifies_on": self.disqualifies_on.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StepConfig":
        return cls(
            index=data["index"],
            question=data["question"],
            gate=data["gate"],
            disqualifies_on=Answer(data["disqualifies_on"]),
        )


@dataclass(frozen=True)
class StepAnswer:
    index: int
    answer: Answer
    rationale: str | None
    by: str
    at: str

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "answer": self.answer.value,
            "rationale": self.rationale,
            "by": self.by,
            "at": self.at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StepAnswer":
        return cls(
            index=data["index"],
            answer=Answer(data["answer"]),
            rationale=data.get("rationale"),
            by=data["by"],
            at=data["at"],
        )


def load_step_config(text: str) -> tuple[StepConfig, ...]:
    """Parse a checklist config document; exactly 7 steps indexed 1..7."""
    data = json.loads(text)
    raw_steps = data["steps"] if isinstance(data, dict) else data
    steps = tuple(StepConfig.from_dict(s) for s in raw_steps)
    if [s.index for s in steps] != list(range(1, STEP_COUNT + 1)):
        raise DecisionError(
            f"step config must define indexes 1..{STEP_COUNT} in order, got "
            f"{[s.index for s in steps]}"
        )
    return steps


def default_step_config() -> tuple[StepConfig, ...]:
    text = resources.files("slrwatch").joinpath("config/default_steps.json").read_text()
    return load_step_config(text)


def _disqualifies(step: StepConfig, answer: Answer) -> bool:
    return step.gate and answer is step.disqualifies_on


def evaluate_answers(
    steps: tuple[StepConfig, ...], answers: list[Answer]
) -> Outcome:
    """Outcome for answers applied in index order; PENDING if undecidable yet.

    Pure function of (config, answers): the session logic and any external
    re-check both reduce to this walk.
    """
    for step, answer in zip(steps, answers):
        if _disqualifies(step, answer):
            return Outcome.NO_UPDATE
    if len(answers) >= len(steps):
        return Outcome.UPDATE_NEEDED
    return Outcome.PENDING


@dataclass(frozen=True)
class DecisionSession:
    id: str
    lineage_id: str
    steps: tuple[StepConfig, ...]
    opened_at: str
    evidence: tuple[tuple[str, int | str | None], ...] = ()
    answers: tuple[StepAnswer, ...] = ()
    outcome: Outcome = Outcome.PENDING
    evaluated_at: str | None = None

    def __post_init__(self) -> None:
        if len(self.steps) != STEP_COUNT:
            raise DecisionError(
                f"a session carries exactly {STEP_COUNT} steps, got {len(self.steps)}"
            )

    @property
    def next_index(self) -> int | None:
        """Index of the next unanswered step, or None when the session is over."""
        if self.outcome is not Outcome.PENDING:
            return None
        n = len(self.answers) + 1
        return n if n <= STEP_COUNT else None

    def answer_step(self, index: int, answer: Answer, by: str, at: str,
                    rationale: str | None = None) -> "DecisionSession":
        """Record one answer; steps must be answered in index order."""
        if self.outcome is not Outcome.PENDING:
            raise DecisionError(f"session {self.id} already evaluated ({self.outcome.value})")
        expected = self.next_index
        if index != expected:
            raise DecisionError(
                f"session {self.id}: step {expected} is next, not {index}"
            )
        entry = StepAnswer(index=index, answer=answer, rationale=rationale, by=by, at=at)
        session = replace(self, answers=self.answers + (entry,))
        step = self.steps[index - 1]
        if _disqualifies(step, answer):
            return replace(session, outcome=Outcome.NO_UPDATE, evaluated_at=at)
        if len(session.answers) == STEP_COUNT:
            # Fully answered without tripping a gate; evaluate() seals it.
            return session
        return session

    def evaluate(self, at: str) -> "DecisionSession":
        """Seal the outcome. Idempotent once evaluated."""
        if self.outcome is not Outcome.PENDING:
            return self
        outcome = evaluate_answers(self.steps, [a.answer for a in self.answers])
        if outcome is Outcome.PENDING:
            raise DecisionError(
                f"session {self.id}: {STEP_COUNT - len(self.answers)} steps still unanswered"
            )
        return replace(self, outcome=outcome, evaluated_at=at)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "lineage_id": self.lineage_id,
            "steps": [s.to_dict() for s in self.steps],
            "opened_at": self.opened_at,
            "evidence": {k: v for k, v in self.evidence},
            "answers": [a.to_dict() for a in self.answers],
            "outcome": self.outcome.value,
            "evaluated_at": self.evaluated_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionSession":
        return cls(
            id=data["id"],
            lineage_id=data["lineage_id"],
            steps=tuple(StepConfig.from_dict(s) for s in data["steps"]),
            opened_at=data["opened_at"],
            evidence=tuple(sorted(data.get("evidence", {}).items())),
            answers=tuple(StepAnswer.from_dict(a) for a in data["answers"]),
            outcome=Outcome(data["outcome"]),
            evaluated_at=data.get("evaluated_at"),
        )


def open_session(
    session_id: str,
    lineage_id: str,
    steps: tuple[StepConfig, ...],
    at: str,
    included_count: int,
    trend_count: int,
    last_iteration_at: str | None,
) -> DecisionSession:
    """Start a session over the given evidence. Needs something to decide about."""
    if included_count < 1:
        raise DecisionError(
            f"lineage {lineage_id}: no included candidates, nothing to decide"
        )
    evidence = (
        ("included_count", included_count),
        ("last_iteration_at", last_iteration_at),
        ("trend_count", trend_count),
    )
    return DecisionSession(
        id=session_id,
        lineage_id=lineage_id,
        steps=steps,
        opened_at=at,
        evidence=evidence,
    )
