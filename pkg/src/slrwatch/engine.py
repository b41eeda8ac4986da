"""Orchestration: every operation on a lineage, backed by files and the event log.

The engine is the single writer. Each operation validates against the current
pipeline node, mutates documents under the lineage lock, and records what
happened as events; the node only ever changes as a consequence of an event,
which is what keeps live state and log replay identical.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from . import decision as decision_mod
from . import deposit as deposit_mod
from . import pipeline, screening, snowball
from .biblio import DEFAULT_NON_STUDY_PATTERNS, StudyRecord, fingerprint
from .pipeline import EventKind, Node, PipelineEvent, PipelineState, ScheduleConfig
from .registry import (
    Protocol,
    RegistryError,
    ReviewLineage,
    ReviewStatus,
    ReviewVersion,
    DateWindow,
    detect_versions,
)
from .screening import Candidate, CandidateState, Verdict
from .storage import Storage

logger = logging.getLogger(__name__)


class EngineError(RuntimeError):
    code = "internal"


class NotFoundError(EngineError):
    code = "not_found"


class InvalidStateError(EngineError):
    code = "invalid_state"


class ConflictError(EngineError):
    code = "conflict"


class ValidationError(EngineError):
    code = "validation"


@dataclass(frozen=True)
class EngineConfig:
    required_reviewers: int = 2
    auto_exclude_unmatched: bool = True
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    source: dict = field(default_factory=dict)
    archive: dict = field(default_factory=lambda: {"kind": "local", "path": "archive"})
    sink: dict = field(default_factory=lambda: {"kind": "file", "path": "outbox.ndjson"})
    steps_path: str | None = None
    non_study_patterns: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "required_reviewers": self.required_reviewers,
            "auto_exclude_unmatched": self.auto_exclude_unmatched,
            "schedule": self.schedule.to_dict(),
            "source": self.source,
            "archive": self.archive,
            "sink": self.sink,
            "steps_path": self.steps_path,
            "non_study_patterns": list(self.non_study_patterns),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        return cls(
            required_reviewers=data.get("required_reviewers", 2),
            auto_exclude_unmatched=data.get("auto_exclude_unmatched", True),
            schedule=ScheduleConfig.from_dict(data.get("schedule", {})),
            source=data.get("source") or {},
            archive=data.get("archive") or {"kind": "local", "path": "archive"},
            sink=data.get("sink") or {"kind": "file", "path": "outbox.ndjson"},
            steps_path=data.get("steps_path"),
            non_study_patterns=tuple(data.get("non_study_patterns") or ()),
        )


def _utcnow() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


class Engine:
    def __init__(
        self,
        root: str | Path,
        clock: Callable[[], dt.datetime] = _utcnow,
        source: snowball.CitationSource | None = None,
        archive=None,
        sink: pipeline.NotificationSink | None = None,
    ):
        self.storage = Storage(root)
        self.clock = clock
        self.config = self._load_config()
        self._source = source or self._build_source()
        self._archive = archive or self._build_archive()
        self._sink = sink or self._build_sink()
        self._steps = self._load_steps()

    # -- construction helpers

    @classmethod
    def init(cls, root: str | Path, config: EngineConfig | None = None) -> "Engine":
        """Create the data directory with a default configuration file."""
        storage = Storage(root)
        if storage.config_path().exists():
            raise ConflictError(f"{storage.config_path()} already exists")
        storage.write_json(storage.config_path(), (config or EngineConfig()).to_dict())
        (storage.root / "lineages").mkdir(parents=True, exist_ok=True)
        return cls(root)

    def _load_config(self) -> EngineConfig:
        path = self.storage.config_path()
        if not path.exists():
            return EngineConfig()
        return EngineConfig.from_dict(self.storage.read_json(path))

    def _resolve(self, path_text: str) -> Path:
        path = Path(path_text)
        return path if path.is_absolute() else self.storage.root / path

    def _build_source(self) -> snowball.CitationSource | None:
        spec = self.config.source
        kind = spec.get("kind")
        if not kind:
            return None
        if kind == "fixture":
            graph = self._resolve(spec["path"]).read_text(encoding="utf-8")
            return snowball.FixtureCitationSource(
                graph, page_size=spec.get("page_size", 20))
        if kind == "http":
            return snowball.HttpCitationSource(
                spec["base_url"],
                rate_limit=spec.get("rate_limit", 60),
                page_size=spec.get("page_size", 100),
                token_env=spec.get("token_env", "SLRWATCH_SOURCE_TOKEN"),
            )
        raise ValidationError(f"unknown citation source kind {kind!r}")

    def _build_archive(self):
        spec = self.config.archive
        kind = spec.get("kind", "local")
        if kind == "local":
            return deposit_mod.LocalDirectoryArchive(
                str(self._resolve(spec.get("path", "archive"))))
        if kind == "http":
            return deposit_mod.HttpArchive(
                spec["base_url"],
                token_env=spec.get("token_env", "SLRWATCH_ARCHIVE_TOKEN"),
            )
        raise ValidationError(f"unknown archive kind {kind!r}")

    def _build_sink(self) -> pipeline.NotificationSink:
        spec = self.config.sink
        kind = spec.get("kind", "file")
        if kind == "file":
            return pipeline.FileSink(str(self._resolve(spec.get("path", "outbox.ndjson"))))
        if kind == "webhook":
            return pipeline.WebhookSink(spec["url"])
        raise ValidationError(f"unknown notification sink kind {kind!r}")

    def _load_steps(self) -> tuple[decision_mod.StepConfig, ...]:
        if self.config.steps_path:
            text = self._resolve(self.config.steps_path).read_text(encoding="utf-8")
            return decision_mod.load_step_config(text)
        return decision_mod.default_step_config()

    # -- time

    def now(self) -> dt.datetime:
        return self.clock()

    def now_iso(self) -> str:
        return self.now().isoformat()

    # -- documents

    def _lineage(self, lineage_id: str) -> ReviewLineage:
        if not self.storage.lineage_exists(lineage_id):
            raise NotFoundError(f"no lineage {lineage_id!r}")
        return ReviewLineage.from_dict(
            self.storage.read_json(self.storage.doc(lineage_id, "lineage")))

    def _save_lineage(self, lineage: ReviewLineage) -> None:
        self.storage.write_json(self.storage.doc(lineage.id, "lineage"),
                                lineage.to_dict())

    def _state(self, lineage_id: str) -> tuple[PipelineState, str | None]:
        data = self.storage.read_json(self.storage.doc(lineage_id, "state"))
        return PipelineState.from_dict(data), data.get("last_run")

    def _save_state(self, state: PipelineState, last_run: str | None) -> None:
        data = state.to_dict()
        data["last_run"] = last_run
        self.storage.write_json(self.storage.doc(state.lineage_id, "state"), data)

    def _candidates(self, lineage_id: str) -> list[Candidate]:
        data = self.storage.read_json(self.storage.doc(lineage_id, "candidates"),
                                      default=[])
        return [Candidate.from_dict(c) for c in data]

    def _save_candidates(self, lineage_id: str, candidates: list[Candidate]) -> None:
        self.storage.write_json(self.storage.doc(lineage_id, "candidates"),
                                [c.to_dict() for c in candidates])

    def _iterations(self, lineage_id: str) -> list[dict]:
        return self.storage.read_json(self.storage.doc(lineage_id, "iterations"),
                                      default=[])

    def _sessions(self, lineage_id: str) -> list[decision_mod.DecisionSession]:
        data = self.storage.read_json(self.storage.doc(lineage_id, "sessions"),
                                      default=[])
        return [decision_mod.DecisionSession.from_dict(s) for s in data]

    def _save_sessions(self, lineage_id: str,
                       sessions: list[decision_mod.DecisionSession]) -> None:
        self.storage.write_json(self.storage.doc(lineage_id, "sessions"),
                                [s.to_dict() for s in sessions])

    def _deposits(self, lineage_id: str) -> list[deposit_mod.DepositRecord]:
        data = self.storage.read_json(self.storage.doc(lineage_id, "deposits"),
                                      default=[])
        return [deposit_mod.DepositRecord.from_dict(d) for d in data]

    def _save_deposits(self, lineage_id: str,
                       deposits: list[deposit_mod.DepositRecord]) -> None:
        self.storage.write_json(self.storage.doc(lineage_id, "deposits"),
                                [d.to_dict() for d in deposits])

    # -- events

    def _emit(self, lineage_id: str, kind: EventKind, payload: dict) -> PipelineEvent:
        """Log an event; move the node when the transition table defines one.

        Every event lands in the log. Kinds undefined at the current node are
        informational (receipts, counts, error reports) and leave it unchanged,
        which is exactly how replay treats them.
        """
        at = self.now_iso()
        state, last_run = self._state(lineage_id)
        event = PipelineEvent(
            seq=self.storage.last_seq(lineage_id) + 1,
            lineage_id=lineage_id,
            kind=kind,
            payload=payload,
            at=at,
        )
        self.storage.append_event(event)
        if pipeline.defined(state.node, kind):
            new_node = pipeline.next_node(state.node, kind, payload)
            if new_node is not state.node:
                state = PipelineState(node=new_node, lineage_id=lineage_id,
                                      entered_at=at)
                self._save_state(state, last_run)
        return event

    def events_since(self, lineage_id: str, after_seq: int = 0) -> list[PipelineEvent]:
        if not self.storage.lineage_exists(lineage_id):
            raise NotFoundError(f"no lineage {lineage_id!r}")
        return self.storage.read_events(lineage_id, after_seq)

    # -- registration and versions

    def _merge_corpus(self, records: list[StudyRecord]) -> None:
        corpus = self.storage.load_corpus()
        for record in records:
            existing = corpus.get(record.id)
            if existing is not None and fingerprint(existing) != fingerprint(record):
                raise ConflictError(
                    f"corpus id {record.id!r} already names a different work"
                )
            corpus[record.id] = existing or record
        self.storage.save_corpus(corpus)

    def _validate_included(self, version: ReviewVersion,
                           new_records: list[StudyRecord]) -> None:
        known = set(self.storage.load_corpus()) | {r.id for r in new_records}
        missing = [sid for sid in version.included if sid not in known]
        if missing:
            raise ValidationError(
                f"version {version.id!r} includes unknown study ids: {missing}"
            )

    def register_review(self, lineage_id: str, version: ReviewVersion,
                        included_records: list[StudyRecord] = ()) -> ReviewLineage:
        """Create a lineage from its original review version."""
        if self.storage.lineage_exists(lineage_id):
            raise ConflictError(f"lineage {lineage_id!r} already exists")
        records = list(included_records) + [version.citation]
        self._validate_included(version, records)
        lineage = ReviewLineage(id=lineage_id, versions=(version,))
        self._merge_corpus(records)
        self._save_lineage(lineage)
        state = PipelineState(node=Node.VERSION_CONTROL, lineage_id=lineage_id,
                              entered_at=self.now_iso())
        self._save_state(state, None)
        self._emit(lineage_id, EventKind.VERSIONS_LINKED,
                   {"version_id": version.id, "kind": version.kind.value})
        if version.protocol is not None:
            self._emit(lineage_id, EventKind.PROTOCOLS_OBTAINED,
                       {"version_id": version.id})
        return self._lineage(lineage_id)

    def link_version(self, lineage_id: str, version: ReviewVersion,
                     included_records: list[StudyRecord] = ()) -> ReviewLineage:
        """Attach an update or replication to an existing lineage."""
        with self.storage.lock(lineage_id):
            lineage = self._lineage(lineage_id)
            records = list(included_records) + [version.citation]
            self._validate_included(version, records)
            lineage = lineage.with_version(version)  # id/kind invariants re-checked
            self._merge_corpus(records)
            self._save_lineage(lineage)
            self._emit(lineage_id, EventKind.VERSIONS_LINKED,
                       {"version_id": version.id, "kind": version.kind.value})
            if version.protocol is not None:
                self._emit(lineage_id, EventKind.PROTOCOLS_OBTAINED,
                           {"version_id": version.id})
            return self._lineage(lineage_id)

    def set_protocol(self, lineage_id: str, version_id: str,
                     protocol: Protocol) -> ReviewLineage:
        with self.storage.lock(lineage_id):
            lineage = self._lineage(lineage_id)
            target = lineage.version(version_id)
            versions = tuple(
                replace(v, protocol=protocol) if v.id == version_id else v
                for v in lineage.versions
            )
            self._save_lineage(replace(lineage, versions=versions))
            self._emit(lineage_id, EventKind.PROTOCOLS_OBTAINED,
                       {"version_id": target.id})
            return self._lineage(lineage_id)

    def get_lineage(self, lineage_id: str) -> ReviewLineage:
        return self._lineage(lineage_id)

    def get_state(self, lineage_id: str) -> PipelineState:
        if not self.storage.lineage_exists(lineage_id):
            raise NotFoundError(f"no lineage {lineage_id!r}")
        state, _ = self._state(lineage_id)
        return state

    def get_iterations(self, lineage_id: str) -> list[dict]:
        if not self.storage.lineage_exists(lineage_id):
            raise NotFoundError(f"no lineage {lineage_id!r}")
        return self._iterations(lineage_id)

    def list_lineages(self) -> list[ReviewLineage]:
        return [self._lineage(lid) for lid in self.storage.list_lineages()]

    def suggest_versions(self, lineage_id: str) -> list[StudyRecord]:
        """Candidates that look like unregistered versions of this review."""
        lineage = self._lineage(lineage_id)
        pool = [c.record for c in self._candidates(lineage_id)]
        return detect_versions(lineage, pool)

    # -- snowballing

    def _known_fingerprints(self, lineage: ReviewLineage,
                            candidates: list[Candidate]) -> set[str]:
        corpus = self.storage.load_corpus()
        known = {fingerprint(r).value for r in lineage.union_included(corpus)}
        known |= {fingerprint(v.citation).value for v in lineage.versions}
        known |= {fingerprint(c.record).value for c in candidates}
        return known

    def _window(self, lineage: ReviewLineage, now: dt.datetime) -> DateWindow:
        schedule = self.config.schedule
        start = schedule.window_start or lineage.search_window().start
        end = schedule.window_end or now.date()
        return DateWindow(start=start, end=end)

    def run_iteration(self, lineage_id: str) -> dict:
        """One snowball run: only valid while the lineage is waiting for one."""
        if self._source is None:
            raise ValidationError("no citation source configured")
        with self.storage.lock(lineage_id):
            lineage = self._lineage(lineage_id)
            state, _ = self._state(lineage_id)
            if state.node is not Node.SNOWBALL_WAIT:
                raise InvalidStateError(
                    f"lineage {lineage_id} is at {state.node.value}, not SnowballWait"
                )
            try:
                protocol = lineage.effective_protocol()
            except RegistryError as exc:
                raise InvalidStateError(str(exc))

            now = self.now()
            started_at = now.isoformat()
            corpus = self.storage.load_corpus()
            candidates = self._candidates(lineage_id)
            seeds = lineage.seed_set(corpus)
            window = self._window(lineage, now)
            iterations = self._iterations(lineage_id)
            iteration_id = f"it-{len(iterations) + 1:04d}"

            self._emit(lineage_id, EventKind.TICK, {"iteration_id": iteration_id})
            state, _ = self._state(lineage_id)
            self._save_state(state, started_at)

            patterns = self.config.non_study_patterns or DEFAULT_NON_STUDY_PATTERNS
            try:
                report = snowball.snowball(
                    self._source, seeds, window,
                    self._known_fingerprints(lineage, candidates),
                    non_study_patterns=patterns,
                )
            except snowball.SnowballError as exc:
                failed = {
                    "id": iteration_id, "status": "failed",
                    "started_at": started_at, "finished_at": self.now_iso(),
                    "error": str(exc),
                    "window": window.to_dict(),
                }
                iterations.append(failed)
                self.storage.write_json(
                    self.storage.doc(lineage_id, "iterations"), iterations)
                self._emit(lineage_id, EventKind.ERROR,
                           {"iteration_id": iteration_id, "message": str(exc)})
                return failed

            iteration = {
                "id": iteration_id, "status": "ok",
                "started_at": started_at, "finished_at": self.now_iso(),
                "window": window.to_dict(),
                **report.to_dict(),
            }
            iterations.append(iteration)
            self.storage.write_json(self.storage.doc(lineage_id, "iterations"),
                                    iterations)
            self._emit(lineage_id, EventKind.ITERATION_FINISHED, {
                "iteration_id": iteration_id,
                "raw_hits": report.raw_hits,
                "window_hits": report.window_hits,
                "new_unique": report.new_unique,
            })

            if report.new_unique == 0:
                self._emit(lineage_id, EventKind.NO_CANDIDATES,
                           {"iteration_id": iteration_id})
                return iteration

            seed_of: dict[str, list[str]] = {}
            for seed_id, hit_ids in report.per_seed_provenance:
                for hit_id in hit_ids:
                    seed_of.setdefault(hit_id, []).append(seed_id)
            at = self.now_iso()
            for record in report.candidates:
                candidates.append(screening.prescreen(
                    record, protocol, iteration_id, at,
                    seeds=tuple(seed_of.get(record.id, ())),
                    auto_exclude_unmatched=self.config.auto_exclude_unmatched,
                ))
            self._save_candidates(lineage_id, candidates)
            self._emit(lineage_id, EventKind.CANDIDATES_FOUND,
                       {"iteration_id": iteration_id, "new_unique": report.new_unique})
            self._maybe_apply_criteria(lineage_id)
            return iteration

    def _maybe_apply_criteria(self, lineage_id: str) -> None:
        """Close the screening stage once no candidate is awaiting a human."""
        state, _ = self._state(lineage_id)
        if state.node is not Node.APPLY_CRITERIA:
            return
        candidates = self._candidates(lineage_id)
        open_states = (CandidateState.PRESCREENED, CandidateState.NEEDS_CONSENSUS)
        if any(c.state in open_states for c in candidates):
            return
        potentials = sum(1 for c in candidates if c.state is CandidateState.INCLUDED)
        self._emit(lineage_id, EventKind.CRITERIA_APPLIED, {"potentials": potentials})

    # -- screening

    def screening_queue(self, lineage_id: str) -> list[Candidate]:
        return screening.screening_queue(self._candidates(lineage_id))

    def _find_candidate(self, candidates: list[Candidate], record_id: str) -> int:
        for i, c in enumerate(candidates):
            if c.record.id == record_id:
                return i
        raise NotFoundError(f"no candidate {record_id!r}")

    def record_decision(self, lineage_id: str, record_id: str, reviewer: str,
                        verdict: Verdict, criteria: tuple[str, ...] = (),
                        rationale: str | None = None,
                        is_consensus: bool = False) -> Candidate:
        with self.storage.lock(lineage_id):
            lineage = self._lineage(lineage_id)
            protocol = lineage.effective_protocol()
            candidates = self._candidates(lineage_id)
            i = self._find_candidate(candidates, record_id)
            at = self.now_iso()
            if is_consensus:
                candidates[i] = screening.resolve_consensus(
                    candidates[i], reviewer, verdict, protocol, at,
                    criteria=criteria, rationale=rationale)
            else:
                candidates[i] = screening.record_decision(
                    candidates[i], reviewer, verdict, protocol, at,
                    criteria=criteria, rationale=rationale,
                    required_reviewers=self.config.required_reviewers)
            self._save_candidates(lineage_id, candidates)
            self._maybe_apply_criteria(lineage_id)
            return candidates[i]

    def mark_trend(self, lineage_id: str, record_id: str, actor: str,
                   note: str | None = None, flagged: bool = True) -> Candidate:
        with self.storage.lock(lineage_id):
            candidates = self._candidates(lineage_id)
            i = self._find_candidate(candidates, record_id)
            candidates[i] = screening.mark_trend(
                candidates[i], actor, self.now_iso(), note=note, flagged=flagged)
            self._save_candidates(lineage_id, candidates)
            return candidates[i]

    def get_candidates(self, lineage_id: str) -> list[Candidate]:
        if not self.storage.lineage_exists(lineage_id):
            raise NotFoundError(f"no lineage {lineage_id!r}")
        return self._candidates(lineage_id)

    # -- deposit

    def export_bundle(self, lineage_id: str) -> str:
        if not self.storage.lineage_exists(lineage_id):
            raise NotFoundError(f"no lineage {lineage_id!r}")
        included = [c.record for c in self._candidates(lineage_id)
                    if c.state is CandidateState.INCLUDED]
        try:
            return deposit_mod.render_bundle(lineage_id, included, self.now_iso())
        except deposit_mod.DepositError as exc:
            raise ValidationError(str(exc))

    def deposit_bundle(self, lineage_id: str) -> deposit_mod.DepositRecord:
        """Export the included candidates and store the bundle in the archive."""
        with self.storage.lock(lineage_id):
            state, _ = self._state(lineage_id)
            if state.node is not Node.PERSIST:
                raise InvalidStateError(
                    f"lineage {lineage_id} is at {state.node.value}, not Persist"
                )
            document = self.export_bundle(lineage_id)
            deposits = self._deposits(lineage_id)
            deposit_id = f"dep-{len(deposits) + 1:04d}"
            try:
                record, created = deposit_mod.deposit(
                    self._archive, lineage_id, document, deposits,
                    deposit_id, self.now_iso())
            except deposit_mod.ArchiveUnavailable as exc:
                self._emit(lineage_id, EventKind.ERROR,
                           {"context": "deposit", "message": str(exc),
                            "retryable": True})
                raise
            except (deposit_mod.ArchiveAuthError, deposit_mod.DepositError) as exc:
                self._emit(lineage_id, EventKind.ERROR,
                           {"context": "deposit", "message": str(exc),
                            "retryable": False})
                raise
            if created:
                deposits.append(record)
                self._save_deposits(lineage_id, deposits)
            self._emit(lineage_id, EventKind.EXPORTED,
                       {"deposit_id": record.id, "bundle_hash": record.bundle_hash})
            self._emit(lineage_id, EventKind.DEPOSITED,
                       {"deposit_id": record.id,
                        "archive_reference": record.archive_reference})
            candidates = self._candidates(lineage_id)
            at = self.now_iso()
            for i, c in enumerate(candidates):
                if c.state is CandidateState.INCLUDED:
                    candidates[i] = screening.mark_deposited(
                        c, at, f"{record.archive_name}:{record.archive_reference}")
            self._save_candidates(lineage_id, candidates)
            return record

    def get_deposits(self, lineage_id: str) -> list[deposit_mod.DepositRecord]:
        if not self.storage.lineage_exists(lineage_id):
            raise NotFoundError(f"no lineage {lineage_id!r}")
        return self._deposits(lineage_id)

    # -- decision sessions

    def _pending_session(
        self, sessions: list[decision_mod.DecisionSession]
    ) -> int | None:
        for i, s in enumerate(sessions):
            if s.outcome is decision_mod.Outcome.PENDING:
                return i
        return None

    def open_session(self, lineage_id: str) -> decision_mod.DecisionSession:
        with self.storage.lock(lineage_id):
            state, _ = self._state(lineage_id)
            if state.node is not Node.POST_DEPLOY_TESTING:
                raise InvalidStateError(
                    f"lineage {lineage_id} is at {state.node.value}, "
                    "not PostDeployTesting"
                )
            sessions = self._sessions(lineage_id)
            if self._pending_session(sessions) is not None:
                raise ConflictError(f"lineage {lineage_id} already has a pending session")
            candidates = self._candidates(lineage_id)
            evidence_states = (CandidateState.INCLUDED, CandidateState.DEPOSITED)
            included = sum(1 for c in candidates if c.state in evidence_states)
            trends = sum(1 for c in candidates if c.trend)
            iterations = self._iterations(lineage_id)
            last_at = iterations[-1]["finished_at"] if iterations else None
            try:
                session = decision_mod.open_session(
                    f"ses-{len(sessions) + 1:04d}", lineage_id, self._steps,
                    self.now_iso(), included_count=included, trend_count=trends,
                    last_iteration_at=last_at)
            except decision_mod.DecisionError as exc:
                raise ValidationError(str(exc))
            sessions.append(session)
            self._save_sessions(lineage_id, sessions)
            return session

    def answer_step(self, lineage_id: str, index: int, answer: decision_mod.Answer,
                    by: str, rationale: str | None = None) -> decision_mod.DecisionSession:
        with self.storage.lock(lineage_id):
            sessions = self._sessions(lineage_id)
            i = self._pending_session(sessions)
            if i is None:
                raise InvalidStateError(f"lineage {lineage_id} has no pending session")
            sessions[i] = sessions[i].answer_step(
                index, answer, by, self.now_iso(), rationale=rationale)
            self._save_sessions(lineage_id, sessions)
            if sessions[i].outcome is not decision_mod.Outcome.PENDING:
                # A gate short-circuited: the session is decided right here.
                self._after_evaluation(lineage_id, sessions[i])
            return sessions[i]

    def evaluate_session(self, lineage_id: str) -> decision_mod.DecisionSession:
        with self.storage.lock(lineage_id):
            sessions = self._sessions(lineage_id)
            i = self._pending_session(sessions)
            if i is None:
                # Already sealed (possibly by a gate short-circuit): idempotent.
                if sessions:
                    return sessions[-1]
                raise InvalidStateError(f"lineage {lineage_id} has no session")
            sessions[i] = sessions[i].evaluate(self.now_iso())
            self._save_sessions(lineage_id, sessions)
            self._after_evaluation(lineage_id, sessions[i])
            return sessions[i]

    def _after_evaluation(self, lineage_id: str,
                          session: decision_mod.DecisionSession) -> None:
        self._emit(lineage_id, EventKind.SESSION_EVALUATED,
                   {"session_id": session.id, "outcome": session.outcome.value})
        if session.outcome is decision_mod.Outcome.UPDATE_NEEDED:
            # Entering FinalDeploy raises the flag and tells the authors.
            self.flag_review(lineage_id, ReviewStatus.SUITABLE_FOR_UPDATE)
            self.notify(lineage_id)

    def get_sessions(self, lineage_id: str) -> list[decision_mod.DecisionSession]:
        if not self.storage.lineage_exists(lineage_id):
            raise NotFoundError(f"no lineage {lineage_id!r}")
        return self._sessions(lineage_id)

    # -- flags, notifications, restart

    def flag_review(self, lineage_id: str, status: ReviewStatus) -> ReviewLineage:
        with self.storage.lock(lineage_id):
            lineage = self._lineage(lineage_id)
            try:
                changed = pipeline.check_flag(lineage.status, status)
            except pipeline.FlagError as exc:
                raise ValidationError(str(exc))
            if changed:
                lineage = lineage.with_status(status)
                self._save_lineage(lineage)
            self._emit(lineage_id, EventKind.FLAGGED,
                       {"status": status.value, "noop": not changed})
            return lineage

    def notify(self, lineage_id: str, message: str | None = None) -> list[pipeline.Receipt]:
        """Tell every version contact; per-contact failures never block."""
        with self.storage.lock(lineage_id):
            lineage = self._lineage(lineage_id)
            text = message or (
                f"review lineage {lineage_id}: status {lineage.status.value}, "
                "new evidence bundle deposited"
            )
            contacts = list(dict.fromkeys(
                contact for v in lineage.versions for contact in v.contacts))
            if not contacts:
                self._emit(lineage_id, EventKind.NOTIFIED,
                           {"warning": "no contacts on file", "contacts": 0})
                return []
            receipts = [self._sink.deliver(lineage_id, c, text) for c in contacts]
            for receipt in receipts:
                if receipt.ok:
                    self._emit(lineage_id, EventKind.NOTIFIED,
                               {"contact": receipt.contact, "sink": receipt.sink,
                                "detail": receipt.detail})
                else:
                    self._emit(lineage_id, EventKind.ERROR,
                               {"context": "notify", "contact": receipt.contact,
                                "detail": receipt.detail})
            return receipts

    def update_published(self, lineage_id: str) -> ReviewLineage:
        """The manual update shipped: restart surveillance from version control."""
        with self.storage.lock(lineage_id):
            state, _ = self._state(lineage_id)
            if state.node is not Node.UPDATE_IN_PROGRESS:
                raise InvalidStateError(
                    f"lineage {lineage_id} is at {state.node.value}, "
                    "not UpdateInProgress"
                )
            self._emit(lineage_id, EventKind.UPDATE_PUBLISHED, {})
            return self.flag_review(lineage_id, ReviewStatus.UP_TO_DATE)

    # -- scheduling

    def tick(self, now: dt.datetime | None = None) -> list[dict]:
        """Wake every lineage whose snowball run is due. Returns what ran."""
        now = now or self.now()
        ran: list[dict] = []
        for lineage_id in self.storage.list_lineages():
            state, last_run_text = self._state(lineage_id)
            last_run = (dt.datetime.fromisoformat(last_run_text)
                        if last_run_text else None)
            if not pipeline.is_due(last_run, now, self.config.schedule):
                continue
            if state.node is Node.SNOWBALL_RUN:
                self._emit(lineage_id, EventKind.TICK,
                           {"skipped": "already_running"})
                continue
            if state.node is not Node.SNOWBALL_WAIT:
                continue
            previous_clock = self.clock
            self.clock = lambda: now
            try:
                ran.append(self.run_iteration(lineage_id))
            finally:
                self.clock = previous_clock
        return ran

    # -- observability

    def metrics(self, lineage_id: str) -> dict:
        lineage = self._lineage(lineage_id)
        state, last_run = self._state(lineage_id)
        candidates = self._candidates(lineage_id)
        by_state = {s.value: 0 for s in CandidateState}
        for c in candidates:
            by_state[c.state.value] += 1
        iterations = self._iterations(lineage_id)
        next_run = None
        if last_run is not None:
            next_dt = (dt.datetime.fromisoformat(last_run)
                       + self.config.schedule.frequency)
            next_run = next_dt.isoformat()
        return {
            "lineage_id": lineage_id,
            "node": state.node.value,
            "status": lineage.status.value,
            "funnel": [
                {
                    "iteration_id": it["id"],
                    "raw_hits": it.get("raw_hits", 0),
                    "window_hits": it.get("window_hits", 0),
                    "new_unique": it.get("new_unique", 0),
                    "status": it["status"],
                }
                for it in iterations
            ],
            "candidates_by_state": by_state,
            "trend_count": sum(1 for c in candidates if c.trend),
            "deposits": len(self._deposits(lineage_id)),
            "last_run": last_run,
            "next_run": next_run,
        }

    def replay_state(self, lineage_id: str) -> dict:
        """Rebuild node and status from the log and compare with live state."""
        lineage = self._lineage(lineage_id)
        state, _ = self._state(lineage_id)
        result = pipeline.replay(self.storage.read_events(lineage_id))
        return {
            "replayed_node": result.node.value,
            "replayed_status": result.status.value,
            "live_node": state.node.value,
            "live_status": lineage.status.value,
            "events": result.events,
            "match": (result.node is state.node
                      and result.status is lineage.status),
        }
