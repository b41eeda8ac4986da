"""Forward snowballing: find new works that cite the seed set.

A citation source answers "which records cite this seed?" page by page. One
snowball run asks every seed, then funnels the raw hits through the search
window, deduplication, noise removal, and subtraction of already-known works.
The run is all-or-nothing: a source failure aborts it with no partial output.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Callable, Protocol, runtime_checkable

import requests

from .biblio import (
    DEFAULT_NON_STUDY_PATTERNS,
    DuplicateCluster,
    EntryKind,
    Removal,
    StudyRecord,
    dedup,
    filter_non_studies,
    fingerprint,
    parse_bib,
)
from .registry import DateWindow

logger = logging.getLogger(__name__)


class SnowballError(RuntimeError):
    """A citation source failed; the whole run is abandoned."""


@runtime_checkable
class CitationSource(Protocol):
    name: str
    rate_limit: int  # requests per minute
    page_size: int

    def cited_by(
        self, seed: StudyRecord, cursor: str | None = None
    ) -> tuple[list[StudyRecord], str | None]:
        """One page of records citing `seed`, plus the cursor for the next page."""
        ...


class RateLimiter:
    """Spaces calls at least 60/rate seconds apart. Clock and sleep injectable."""

    def __init__(
        self,
        rate_per_minute: int,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ):
        if rate_per_minute <= 0:
            raise ValueError("rate_per_minute must be positive")
        self.interval = 60.0 / rate_per_minute
        self._sleep = sleep
        self._clock = clock
        self._last: float | None = None

    def wait(self) -> None:
        now = self._clock()
        if self._last is not None:
            remaining = self.interval - (now - self._last)
            if remaining > 0:
                self._sleep(remaining)
                now = self._clock()
        self._last = now


class FixtureCitationSource:
    """Citation source backed by a citation-graph file.

    The file holds the citing records as ordinary BibTeX entries and the
    citation edges as lines of the form `CITES <citing-id> <cited-id>`.
    Seeds are matched by fingerprint, so a seed record from the corpus finds
    the graph node describing the same work.
    """

    def __init__(self, graph_text: str, name: str = "fixture", page_size: int = 20,
                 rate_limit: int = 6000):
        self.name = name
        self.page_size = page_size
        self.rate_limit = rate_limit
        bib_lines: list[str] = []
        edge_lines: list[str] = []
        for line in graph_text.splitlines():
            if line.startswith("CITES "):
                edge_lines.append(line)
            else:
                bib_lines.append(line)
        records, _ = parse_bib("\n".join(bib_lines), mode="strict")
        self._by_id = {r.id: r for r in records}
        self._edges: list[tuple[str, str]] = []
        for line in edge_lines:
            parts = line.split()
            if len(parts) != 3:
                raise SnowballError(f"malformed edge line: {line!r}")
            _, citing, cited = parts
            if citing not in self._by_id or cited not in self._by_id:
                raise SnowballError(f"edge references unknown record: {line!r}")
            self._edges.append((citing, cited))
        self._by_fingerprint: dict[str, str] = {}
        for r in records:
            self._by_fingerprint.setdefault(fingerprint(r).value, r.id)

    def cited_by(
        self, seed: StudyRecord, cursor: str | None = None
    ) -> tuple[list[StudyRecord], str | None]:
        node_id = self._by_fingerprint.get(fingerprint(seed).value)
        if node_id is None:
            return [], None
        citing = [self._by_id[a] for a, b in self._edges if b == node_id]
        offset = int(cursor) if cursor else 0
        page = citing[offset:offset + self.page_size]
        next_offset = offset + self.page_size
        next_cursor = str(next_offset) if next_offset < len(citing) else None
        return page, next_cursor


def _record_from_api(data: dict, fallback_id: str) -> StudyRecord:
    try:
        kind = EntryKind(data.get("kind", "misc"))
    except ValueError:
        kind = EntryKind.MISC
    return StudyRecord(
        id=data.get("id") or fallback_id,
        kind=kind,
        title=data["title"],
        authors=tuple(data.get("authors") or ()),
        year=int(data["year"]),
        month=data.get("month"),
        venue=data.get("venue"),
        doi=data.get("doi"),
        abstract=data.get("abstract"),
        keywords=tuple(data.get("keywords") or ()),
    )


class HttpCitationSource:
    """Citation source over HTTP: GET {base_url}/cited-by?doi=...&cursor=...

    The endpoint returns `{"hits": [...], "next_cursor": ...}`. Transient
    failures (connection errors, HTTP 5xx, HTTP 429) are retried with
    exponential backoff; anything else aborts. The bearer token is read from
    the environment so it never lands in configuration files.
    """

    MAX_ATTEMPTS = 3

    def __init__(
        self,
        base_url: str,
        name: str = "http",
        rate_limit: int = 60,
        page_size: int = 100,
        token_env: str = "SLRWATCH_SOURCE_TOKEN",
        transport: Callable[..., object] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.name = name
        self.rate_limit = rate_limit
        self.page_size = page_size
        self._token = os.environ.get(token_env) if token_env else None
        self._transport = transport or requests.get
        self._sleep = sleep

    def cited_by(
        self, seed: StudyRecord, cursor: str | None = None
    ) -> tuple[list[StudyRecord], str | None]:
        params: dict[str, str] = {"page_size": str(self.page_size)}
        if seed.doi:
            params["doi"] = seed.doi
        else:
            params["title"] = seed.title
            params["year"] = str(seed.year)
        if cursor:
            params["cursor"] = cursor
        headers = {"Authorization": f"Bearer {self._token}"} if self._token else {}

        delay = 1.0
        last_error = "no attempt made"
        for attempt in range(1, self.MAX_ATTEMPTS + 1):
            try:
                response = self._transport(
                    f"{self.base_url}/cited-by", params=params,
                    headers=headers, timeout=30,
                )
                status = response.status_code
            except requests.RequestException as exc:
                last_error = f"transport error: {exc}"
            else:
                if status == 200:
                    body = response.json()
                    hits = [
                        _record_from_api(h, fallback_id=f"{self.name}-{i}")
                        for i, h in enumerate(body.get("hits", []))
                    ]
                    return hits, body.get("next_cursor")
                if status not in (429,) and status < 500:
                    raise SnowballError(f"{self.name}: HTTP {status} from citation source")
                last_error = f"HTTP {status}"
            if attempt < self.MAX_ATTEMPTS:
                logger.warning("%s: %s, retrying in %.0fs", self.name, last_error, delay)
                self._sleep(delay)
                delay *= 2
        raise SnowballError(f"{self.name}: gave up after {self.MAX_ATTEMPTS} attempts ({last_error})")


def window_filter(records: list[StudyRecord], window: DateWindow) -> list[StudyRecord]:
    """Keep records publishable inside the window.

    Month precision is conservative: a record without a month is kept unless
    its year alone puts it outside the window in both directions.
    """
    kept = []
    for r in records:
        earliest = (r.year, r.month if r.month is not None else 1)
        latest = (r.year, r.month if r.month is not None else 12)
        if window.start is not None and latest < (window.start.year, window.start.month):
            continue
        if earliest > (window.end.year, window.end.month):
            continue
        kept.append(r)
    return kept


@dataclass(frozen=True)
class SnowballReport:
    """Funnel counts, survivors, and provenance of one snowball run."""

    source_name: str
    seeds_used: int
    raw_hits: int
    window_hits: int
    new_unique: int
    candidates: tuple[StudyRecord, ...]
    per_seed_provenance: tuple[tuple[str, tuple[str, ...]], ...]
    duplicates: tuple[DuplicateCluster, ...]
    removed_non_studies: tuple[Removal, ...]
    known_skipped: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "source_name": self.source_name,
            "seeds_used": self.seeds_used,
            "raw_hits": self.raw_hits,
            "window_hits": self.window_hits,
            "new_unique": self.new_unique,
            "candidate_ids": [r.id for r in self.candidates],
            "per_seed_provenance": {
                seed: list(hits) for seed, hits in self.per_seed_provenance
            },
            "duplicate_clusters": [
                {"representative": c.representative, "members": list(c.members)}
                for c in self.duplicates
            ],
            "removed_non_studies": [
                {"id": r.record.id, "rule": r.rule} for r in self.removed_non_studies
            ],
            "known_skipped": list(self.known_skipped),
        }


def _collect_for_seed(
    source: CitationSource,
    seed: StudyRecord,
    limiter: RateLimiter | None = None,
) -> list[StudyRecord]:
    hits: list[StudyRecord] = []
    cursor: str | None = None
    while True:
        if limiter is not None:
            limiter.wait()
        page, cursor = source.cited_by(seed, cursor)
        hits.extend(page)
        if cursor is None:
            return hits


def collect_citations(
    source: CitationSource,
    seeds: list[StudyRecord],
    limiter: RateLimiter | None = None,
) -> list[StudyRecord]:
    """All pages of citing records for every seed, in seed order."""
    hits: list[StudyRecord] = []
    for seed in seeds:
        hits.extend(_collect_for_seed(source, seed, limiter))
    return hits


def snowball(
    source: CitationSource,
    seeds: list[StudyRecord],
    window: DateWindow,
    known_fingerprints: set[str],
    non_study_patterns: tuple[str, ...] = DEFAULT_NON_STUDY_PATTERNS,
    limiter: RateLimiter | None = None,
) -> SnowballReport:
    """One full snowball run over the seed set.

    Funnel order: raw hits, window filter, dedup, noise removal, subtraction
    of known fingerprints. `new_unique` counts the records surviving all of
    it, and every survivor is traceable to at least one seed.
    """
    per_seed_hits: dict[str, list[StudyRecord]] = {}
    raw: list[StudyRecord] = []
    for seed in seeds:
        hits = _collect_for_seed(source, seed, limiter)
        per_seed_hits[seed.id] = hits
        raw.extend(hits)
    in_window = window_filter(raw, window)
    deduped, clusters = dedup(in_window)
    studies, removed = filter_non_studies(deduped, non_study_patterns)
    fresh: list[StudyRecord] = []
    known_skipped: list[str] = []
    for record in studies:
        if fingerprint(record).value in known_fingerprints:
            known_skipped.append(record.id)
        else:
            fresh.append(record)
    surviving = {fingerprint(r).value: r.id for r in fresh}
    provenance = tuple(
        (seed_id, tuple(dict.fromkeys(
            surviving[fp] for fp in (fingerprint(h).value for h in hits)
            if fp in surviving
        )))
        for seed_id, hits in per_seed_hits.items()
    )
    return SnowballReport(
        source_name=source.name,
        seeds_used=len(seeds),
        raw_hits=len(raw),
        window_hits=len(in_window),
        new_unique=len(fresh),
        candidates=tuple(fresh),
        per_seed_provenance=provenance,
        duplicates=tuple(clusters),
        removed_non_studies=tuple(removed),
        known_skipped=tuple(known_skipped),
    )
