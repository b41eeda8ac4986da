"""Review lineages: a published review, its protocol, and its later versions.

A lineage groups the original review with every update and replication of it.
The union of their included studies, plus the version papers themselves, forms
the seed set that citation searches grow from.
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field, replace
from enum import Enum

from .biblio import StudyRecord, fingerprint
from .rules import ExpressionError, parse_expression


class VersionKind(str, Enum):
    ORIGINAL = "original"
    UPDATE = "update"
    REPLICATION = "replication"


class ReviewStatus(str, Enum):
    UP_TO_DATE = "up_to_date"
    SUITABLE_FOR_UPDATE = "suitable_for_update"
    UPDATE_IN_PROGRESS = "update_in_progress"


class RegistryError(ValueError):
    """A lineage, version, or protocol violates its invariants."""


@dataclass(frozen=True)
class DateWindow:
    """Inclusive date range. `start is None` means unbounded at the low end."""

    start: dt.date | None
    end: dt.date

    def __post_init__(self) -> None:
        if self.start is not None and self.start > self.end:
            raise RegistryError(f"window start {self.start} is after end {self.end}")

    def to_dict(self) -> dict:
        return {
            "start": self.start.isoformat() if self.start else None,
            "end": self.end.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DateWindow":
        start = data.get("start")
        return cls(
            start=dt.date.fromisoformat(start) if start else None,
            end=dt.date.fromisoformat(data["end"]),
        )


@dataclass(frozen=True)
class Criterion:
    id: str
    text: str
    expression: str | None = None

    def __post_init__(self) -> None:
        if not re.fullmatch(r"[a-z0-9_.-]+", self.id or ""):
            raise RegistryError(f"criterion id {self.id!r} must be a lowercase slug")
        if not self.text.strip():
            raise RegistryError(f"criterion {self.id}: text must be non-empty")
        if self.expression is not None:
            try:
                parse_expression(self.expression)
            except ExpressionError as exc:
                raise RegistryError(f"criterion {self.id}: bad expression: {exc}")

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "expression": self.expression}

    @classmethod
    def from_dict(cls, data: dict) -> "Criterion":
        return cls(id=data["id"], text=data["text"], expression=data.get("expression"))


@dataclass(frozen=True)
class Protocol:
    """Research questions plus inclusion and exclusion criteria for one version."""

    research_questions: tuple[str, ...]
    inclusion: tuple[Criterion, ...]
    exclusion: tuple[Criterion, ...]
    search_expression: str | None = None

    def __post_init__(self) -> None:
        if not self.research_questions or any(not q.strip() for q in self.research_questions):
            raise RegistryError("protocol needs at least one non-empty research question")
        if not self.inclusion:
            raise RegistryError("protocol needs at least one inclusion criterion")
        if not self.exclusion:
            raise RegistryError("protocol needs at least one exclusion criterion")
        ids = [c.id for c in self.inclusion + self.exclusion]
        if len(set(ids)) != len(ids):
            raise RegistryError("criterion ids must be unique across the protocol")
        if self.search_expression is not None:
            try:
                parse_expression(self.search_expression)
            except ExpressionError as exc:
                raise RegistryError(f"bad search expression: {exc}")

    def criterion(self, criterion_id: str) -> Criterion:
        for c in self.inclusion + self.exclusion:
            if c.id == criterion_id:
                return c
        raise RegistryError(f"unknown criterion id {criterion_id!r}")

    def to_dict(self) -> dict:
        return {
            "research_questions": list(self.research_questions),
            "inclusion": [c.to_dict() for c in self.inclusion],
            "exclusion": [c.to_dict() for c in self.exclusion],
            "search_expression": self.search_expression,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Protocol":
        return cls(
            research_questions=tuple(data["research_questions"]),
            inclusion=tuple(Criterion.from_dict(c) for c in data["inclusion"]),
            exclusion=tuple(Criterion.from_dict(c) for c in data["exclusion"]),
            search_expression=data.get("search_expression"),
        )


@dataclass(frozen=True)
class ReviewVersion:
    """One published version of a review: its own citation record plus what it covered."""

    id: str
    kind: VersionKind
    citation: StudyRecord
    coverage: DateWindow
    included: tuple[str, ...]
    protocol: Protocol | None = None
    contacts: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not re.fullmatch(r"[a-z0-9_-]+", self.id or ""):
            raise RegistryError(f"version id {self.id!r} must be a lowercase slug")
        if len(set(self.included)) != len(self.included):
            raise RegistryError(f"version {self.id}: included ids must be unique")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "citation": self.citation.to_dict(),
            "coverage": self.coverage.to_dict(),
            "included": list(self.included),
            "protocol": self.protocol.to_dict() if self.protocol else None,
            "contacts": list(self.contacts),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewVersion":
        return cls(
            id=data["id"],
            kind=VersionKind(data["kind"]),
            citation=StudyRecord.from_dict(data["citation"]),
            coverage=DateWindow.from_dict(data["coverage"]),
            included=tuple(data["included"]),
            protocol=Protocol.from_dict(data["protocol"]) if data.get("protocol") else None,
            contacts=tuple(data.get("contacts") or ()),
        )


@dataclass(frozen=True)
class ReviewLineage:
    """The original review and all registered versions, ordered by registration."""

    id: str
    versions: tuple[ReviewVersion, ...]
    status: ReviewStatus = ReviewStatus.UP_TO_DATE

    def __post_init__(self) -> None:
        if not re.fullmatch(r"[a-z0-9_-]+", self.id or ""):
            raise RegistryError(f"lineage id {self.id!r} must be a lowercase slug")
        if not self.versions:
            raise RegistryError(f"lineage {self.id}: needs at least one version")
        if self.versions[0].kind is not VersionKind.ORIGINAL:
            raise RegistryError(f"lineage {self.id}: first version must be the original")
        if sum(1 for v in self.versions if v.kind is VersionKind.ORIGINAL) != 1:
            raise RegistryError(f"lineage {self.id}: exactly one original version")
        ids = [v.id for v in self.versions]
        if len(set(ids)) != len(ids):
            raise RegistryError(f"lineage {self.id}: version ids must be unique")

    @property
    def original(self) -> ReviewVersion:
        return self.versions[0]

    def version(self, version_id: str) -> ReviewVersion:
        for v in self.versions:
            if v.id == version_id:
                return v
        raise RegistryError(f"lineage {self.id}: no version {version_id!r}")

    def with_version(self, version: ReviewVersion) -> "ReviewLineage":
        return replace(self, versions=self.versions + (version,))

    def with_status(self, status: ReviewStatus) -> "ReviewLineage":
        return replace(self, status=status)

    def effective_protocol(self) -> Protocol:
        """Protocol of the most recently registered version that has one."""
        for v in reversed(self.versions):
            if v.protocol is not None:
                return v.protocol
        raise RegistryError(f"lineage {self.id}: no version carries a protocol")

    def coverage_end(self) -> dt.date:
        return max(v.coverage.end for v in self.versions)

    def search_window(self, today: dt.date | None = None) -> DateWindow:
        """Window for new evidence: the day after coverage ends, onward."""
        end = today or dt.date.max
        return DateWindow(start=self.coverage_end() + dt.timedelta(days=1), end=end)

    def union_included(self, corpus: dict[str, StudyRecord]) -> list[StudyRecord]:
        """Included studies across all versions, deduplicated by fingerprint."""
        seen: set[str] = set()
        out: list[StudyRecord] = []
        for v in self.versions:
            for study_id in v.included:
                if study_id not in corpus:
                    raise RegistryError(
                        f"lineage {self.id}: included study {study_id!r} not in corpus"
                    )
                record = corpus[study_id]
                fp = fingerprint(record).value
                if fp not in seen:
                    seen.add(fp)
                    out.append(record)
        return out

    def seed_set(self, corpus: dict[str, StudyRecord]) -> list[StudyRecord]:
        """Union of included studies plus the version papers themselves."""
        seen: set[str] = set()
        out: list[StudyRecord] = []
        for record in self.union_included(corpus) + [v.citation for v in self.versions]:
            fp = fingerprint(record).value
            if fp not in seen:
                seen.add(fp)
                out.append(record)
        return out

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "versions": [v.to_dict() for v in self.versions],
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReviewLineage":
        return cls(
            id=data["id"],
            versions=tuple(ReviewVersion.from_dict(v) for v in data["versions"]),
            status=ReviewStatus(data["status"]),
        )


def _title_tokens(title: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", title.lower()))


VERSION_MARKERS = ("update", "updated", "updating", "replicat", "extend", "extension")


def detect_versions(
    lineage: ReviewLineage, candidates: list[StudyRecord]
) -> list[StudyRecord]:
    """Suggest records that look like new versions of the review, never auto-link.

    A candidate qualifies when its title shares at least half of the original
    title's tokens, or when it carries an update/replication marker word and
    shares at least a quarter.
    """
    base = _title_tokens(lineage.original.citation.title)
    known = {fingerprint(v.citation).value for v in lineage.versions}
    suggested = []
    for record in candidates:
        if fingerprint(record).value in known:
            continue
        tokens = _title_tokens(record.title)
        if not base:
            continue
        overlap = len(base & tokens) / len(base)
        marked = any(m in record.title.lower() for m in VERSION_MARKERS)
        if overlap >= 0.5 or (marked and overlap >= 0.25):
            suggested.append(record)
    return suggested
