"""File-backed persistence: JSON documents, an append-only event log, locks.

Layout under one data directory:

    slrwatch.json               engine configuration
    corpus.bib                  every known record, canonical order
    outbox.ndjson               default notification sink
    archive/                    default local deposit archive
    lineages/<id>/lineage.json  versions, protocol, status
    lineages/<id>/state.json    pipeline node, entered_at, last_run
    lineages/<id>/candidates.json
    lineages/<id>/iterations.json
    lineages/<id>/sessions.json
    lineages/<id>/deposits.json
    lineages/<id>/events.ndjson one event per line, gapless seq

Writes go through a temp file and an atomic rename, so a crash never leaves a
half-written document. The event log is append-only.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from .biblio import StudyRecord, parse_bib, render_bib
from .pipeline import PipelineEvent


class StorageError(RuntimeError):
    pass


class Storage:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._locks: dict[str, threading.RLock] = {}
        self._locks_guard = threading.Lock()

    # -- paths

    def lineage_dir(self, lineage_id: str) -> Path:
        return self.root / "lineages" / lineage_id

    def corpus_path(self) -> Path:
        return self.root / "corpus.bib"

    def config_path(self) -> Path:
        return self.root / "slrwatch.json"

    def events_path(self, lineage_id: str) -> Path:
        return self.lineage_dir(lineage_id) / "events.ndjson"

    def lock(self, lineage_id: str) -> threading.RLock:
        with self._locks_guard:
            if lineage_id not in self._locks:
                self._locks[lineage_id] = threading.RLock()
            return self._locks[lineage_id]

    # -- generic JSON documents

    def _write_atomic(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)

    def read_json(self, path: Path, default=None):
        if not path.exists():
            if default is not None:
                return default
            raise StorageError(f"missing document: {path}")
        return json.loads(path.read_text(encoding="utf-8"))

    def write_json(self, path: Path, data) -> None:
        self._write_atomic(path, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def doc(self, lineage_id: str, name: str) -> Path:
        return self.lineage_dir(lineage_id) / f"{name}.json"

    # -- corpus

    def load_corpus(self) -> dict[str, StudyRecord]:
        path = self.corpus_path()
        if not path.exists():
            return {}
        records, issues = parse_bib(path.read_text(encoding="utf-8"), mode="strict")
        return {r.id: r for r in records}

    def save_corpus(self, corpus: dict[str, StudyRecord]) -> None:
        self._write_atomic(self.corpus_path(), render_bib(list(corpus.values())))

    # -- event log

    def append_event(self, event: PipelineEvent) -> None:
        path = self.events_path(event.lineage_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")

    def read_events(self, lineage_id: str, after_seq: int = 0) -> list[PipelineEvent]:
        path = self.events_path(lineage_id)
        if not path.exists():
            return []
        events = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                event = PipelineEvent.from_dict(json.loads(line))
                if event.seq > after_seq:
                    events.append(event)
        return events

    def last_seq(self, lineage_id: str) -> int:
        path = self.events_path(lineage_id)
        if not path.exists():
            return 0
        last = 0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    last = json.loads(line)["seq"]
        return last

    # -- lineage listing

    def list_lineages(self) -> list[str]:
        base = self.root / "lineages"
        if not base.exists():
            return []
        return sorted(p.name for p in base.iterdir() if p.is_dir())

    def lineage_exists(self, lineage_id: str) -> bool:
        return self.doc(lineage_id, "lineage").exists()
