"""Bibliographic records: BibTeX parsing and rendering, fingerprints, deduplication.

Every other part of the tool reads and writes the corpus through the types and
functions defined here.
"""

from __future__ import annotations

import csv
import hashlib
import io
import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum


class EntryKind(str, Enum):
    ARTICLE = "article"
    INPROCEEDINGS = "inproceedings"
    TECHREPORT = "techreport"
    MISC = "misc"


# BibTeX field that carries the venue, per entry kind.
VENUE_FIELD = {
    EntryKind.ARTICLE: "journal",
    EntryKind.INPROCEEDINGS: "booktitle",
    EntryKind.TECHREPORT: "institution",
    EntryKind.MISC: "howpublished",
}

DOI_SHAPE = re.compile(r"^10\.\d+/\S+$")

MONTH_NAMES = {
    "jan": 1, "feb": 2, "mar": 3, "apr": 4, "may": 5, "jun": 6,
    "jul": 7, "aug": 8, "sep": 9, "oct": 10, "nov": 11, "dec": 12,
}

# Title patterns that mark non-study noise (announcements, front matter).
DEFAULT_NON_STUDY_PATTERNS = (
    "call for papers",
    "proceedings of",
    "front matter",
    "table of contents",
    "editorial board",
)

CSV_COLUMNS = ("id", "title", "authors", "year", "venue", "doi", "keywords")


class RecordError(ValueError):
    """A record violates its own invariants."""


@dataclass(frozen=True)
class StudyRecord:
    """One bibliographic entry. Immutable; safe to share across tasks."""

    id: str
    kind: EntryKind
    title: str
    authors: tuple[str, ...]
    year: int
    month: int | None = None
    venue: str | None = None
    doi: str | None = None
    abstract: str | None = None
    keywords: tuple[str, ...] = ()
    extra: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.id.strip():
            raise RecordError("record id must be non-empty")
        if not self.title.strip():
            raise RecordError(f"{self.id}: title must be non-empty")
        if not 1900 <= self.year <= 2100:
            raise RecordError(f"{self.id}: year {self.year} outside 1900-2100")
        if self.month is not None and not 1 <= self.month <= 12:
            raise RecordError(f"{self.id}: month {self.month} outside 1-12")
        if self.doi is not None and not DOI_SHAPE.match(self.doi):
            raise RecordError(f"{self.id}: doi {self.doi!r} does not match 10.<digits>/<suffix>")
        if any(not k.strip() for k in self.keywords):
            raise RecordError(f"{self.id}: keywords must contain no empty strings")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "title": self.title,
            "authors": list(self.authors),
            "year": self.year,
            "month": self.month,
            "venue": self.venue,
            "doi": self.doi,
            "abstract": self.abstract,
            "keywords": list(self.keywords),
            "extra": [list(pair) for pair in self.extra],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StudyRecord":
        return cls(
            id=data["id"],
            kind=EntryKind(data["kind"]),
            title=data["title"],
            authors=tuple(data.get("authors") or ()),
            year=data["year"],
            month=data.get("month"),
            venue=data.get("venue"),
            doi=data.get("doi"),
            abstract=data.get("abstract"),
            keywords=tuple(data.get("keywords") or ()),
            extra=tuple((k, v) for k, v in data.get("extra") or ()),
        )


class FingerprintBasis(str, Enum):
    DOI = "doi"
    NORMALIZED_TITLE_YEAR = "normalized_title_year"


@dataclass(frozen=True)
class Fingerprint:
    value: str
    basis: FingerprintBasis


@dataclass(frozen=True)
class DuplicateCluster:
    representative: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class ParseIssue:
    line: int
    message: str


@dataclass(frozen=True)
class Removal:
    record: StudyRecord
    rule: str


class BibParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


def normalize_doi(raw: str) -> str:
    """Lowercase a DOI and strip resolver prefixes so only `10.../...` remains."""
    text = raw.strip().lower()
    for prefix in ("https://doi.org/", "http://doi.org/", "https://dx.doi.org/",
                   "http://dx.doi.org/", "doi:"):
        if text.startswith(prefix):
            text = text[len(prefix):]
    return text


def title_key(title: str) -> str:
    """Fold diacritics, lowercase, and drop punctuation/whitespace runs entirely."""
    folded = unicodedata.normalize("NFKD", title)
    folded = "".join(ch for ch in folded if unicodedata.category(ch) != "Mn")
    return re.sub(r"[^a-z0-9]+", "", folded.lower())


def fingerprint(record: StudyRecord) -> Fingerprint:
    """Content fingerprint: DOI when present, else normalized title + year."""
    if record.doi:
        basis = FingerprintBasis.DOI
        material = "doi:" + normalize_doi(record.doi)
    else:
        basis = FingerprintBasis.NORMALIZED_TITLE_YEAR
        material = f"title:{title_key(record.title)}|{record.year}"
    value = hashlib.sha256(material.encode("utf-8")).hexdigest()
    return Fingerprint(value=value, basis=basis)


def canonical_sort(records: list[StudyRecord]) -> list[StudyRecord]:
    """Deterministic corpus order: year ascending, then fingerprint ascending."""
    return sorted(records, key=lambda r: (r.year, fingerprint(r).value))


# ---------------------------------------------------------------------------
# Parsing


_ENTRY_START = re.compile(r"^\s*@([A-Za-z]+)\s*[{(]")


def _split_entries(text: str) -> list[tuple[int, str, str]]:
    """Split a document into (line_number, kind, chunk) triples.

    Entries are anchored to lines that open with `@kind{`; free text between
    anchors is ignored.
    """
    lines = text.splitlines()
    starts: list[tuple[int, str]] = []
    for i, line in enumerate(lines):
        m = _ENTRY_START.match(line)
        if m:
            starts.append((i, m.group(1).lower()))
    chunks = []
    for pos, (i, kind) in enumerate(starts):
        end = starts[pos + 1][0] if pos + 1 < len(starts) else len(lines)
        chunk = "\n".join(lines[i:end])
        chunks.append((i + 1, kind, chunk))
    return chunks


def _split_top_level(body: str) -> list[str]:
    """Split an entry body on commas that sit outside braces and quotes."""
    parts: list[str] = []
    buf: list[str] = []
    depth = 0
    in_quotes = False
    for ch in body:
        if ch == "{" and not in_quotes:
            depth += 1
        elif ch == "}" and not in_quotes:
            depth -= 1
        elif ch == '"' and depth == 0:
            in_quotes = not in_quotes
        if ch == "," and depth == 0 and not in_quotes:
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    tail = "".join(buf)
    if tail.strip():
        parts.append(tail)
    return parts


def _strip_value(raw: str, line: int) -> str:
    text = raw.strip()
    if text.startswith("{"):
        if not text.endswith("}"):
            raise BibParseError(line, "unbalanced braces in field value")
        return text[1:-1].strip()
    if text.startswith('"'):
        if len(text) < 2 or not text.endswith('"'):
            raise BibParseError(line, "unterminated quoted field value")
        return text[1:-1].strip()
    return text


def _parse_month(raw: str, line: int) -> int:
    text = raw.strip().lower()
    if text.isdigit():
        return int(text)
    if text[:3] in MONTH_NAMES:
        return MONTH_NAMES[text[:3]]
    raise BibParseError(line, f"unrecognized month {raw!r}")


def _parse_entry(line: int, kind_name: str, chunk: str) -> StudyRecord:
    open_idx = chunk.index("{") if "{" in chunk else chunk.index("(")
    open_char = chunk[open_idx]
    close_char = "}" if open_char == "{" else ")"
    depth = 0
    end_idx = -1
    for i in range(open_idx, len(chunk)):
        if chunk[i] == open_char:
            depth += 1
        elif chunk[i] == close_char:
            depth -= 1
            if depth == 0:
                end_idx = i
                break
    if end_idx < 0:
        raise BibParseError(line, "unbalanced braces in entry")
    if chunk[end_idx + 1:].strip():
        raise BibParseError(line, "trailing text after entry close")
    body = chunk[open_idx + 1:end_idx]

    parts = _split_top_level(body)
    if not parts or "=" in parts[0]:
        raise BibParseError(line, "entry has no citation key")
    key = parts[0].strip()
    if not key or any(ch in key for ch in "{}\" "):
        raise BibParseError(line, f"malformed citation key {parts[0].strip()!r}")

    fields: dict[str, str] = {}
    order: list[str] = []
    for part in parts[1:]:
        if "=" not in part:
            if part.strip():
                raise BibParseError(line, f"field without '=': {part.strip()[:40]!r}")
            continue
        name, raw_value = part.split("=", 1)
        name = name.strip().lower()
        if not name:
            raise BibParseError(line, "field with empty name")
        fields[name] = _strip_value(raw_value, line)
        if name not in order:
            order.append(name)

    try:
        kind = EntryKind(kind_name)
    except ValueError:
        kind = EntryKind.MISC

    title = fields.pop("title", "")
    authors = tuple(
        a.strip() for a in re.split(r"\s+and\s+", fields.pop("author", ""))
        if a.strip()
    )
    year_raw = fields.pop("year", "")
    if not year_raw.strip():
        raise BibParseError(line, f"entry {key!r} has no year")
    try:
        year = int(year_raw.strip())
    except ValueError:
        raise BibParseError(line, f"entry {key!r} has non-numeric year {year_raw!r}")
    month = _parse_month(fields.pop("month"), line) if "month" in fields else None
    doi = normalize_doi(fields.pop("doi")) if "doi" in fields else None
    abstract = fields.pop("abstract", None)
    keywords = tuple(
        k.strip() for k in re.split(r"[,;]", fields.pop("keywords", ""))
        if k.strip()
    )
    venue = fields.pop(VENUE_FIELD[kind], None)
    extra = tuple((name, fields[name]) for name in order if name in fields)

    try:
        return StudyRecord(
            id=key, kind=kind, title=title, authors=authors, year=year,
            month=month, venue=venue, doi=doi, abstract=abstract,
            keywords=keywords, extra=extra,
        )
    except RecordError as exc:
        raise BibParseError(line, str(exc))


def parse_bib(
    text: str | bytes, mode: str = "tolerant"
) -> tuple[list[StudyRecord], list[ParseIssue]]:
    """Parse a BibTeX document into records.

    Strict mode raises on the first malformed entry; tolerant mode skips it and
    records one diagnostic with the entry's line position. `@comment`,
    `@string`, `@preamble`, and free text between entries are ignored in both
    modes. Undecodable bytes fail in both modes.
    """
    if mode not in ("strict", "tolerant"):
        raise ValueError(f"unknown parse mode {mode!r}")
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise BibParseError(0, f"document is not valid UTF-8: {exc}")

    records: list[StudyRecord] = []
    issues: list[ParseIssue] = []
    for line, kind_name, chunk in _split_entries(text):
        if kind_name in ("comment", "string", "preamble"):
            continue
        try:
            records.append(_parse_entry(line, kind_name, chunk))
        except BibParseError as exc:
            if mode == "strict":
                raise
            issues.append(ParseIssue(line=exc.line, message=exc.message))
    return records, issues


# ---------------------------------------------------------------------------
# Rendering


def _render_value(value: str) -> str:
    return "{" + value + "}"


def render_entry(record: StudyRecord) -> str:
    lines = [f"@{record.kind.value}{{{record.id},"]
    lines.append(f"  title = {_render_value(record.title)},")
    if record.authors:
        lines.append(f"  author = {_render_value(' and '.join(record.authors))},")
    lines.append(f"  year = {{{record.year}}},")
    if record.month is not None:
        lines.append(f"  month = {{{record.month}}},")
    if record.venue is not None:
        lines.append(f"  {VENUE_FIELD[record.kind]} = {_render_value(record.venue)},")
    if record.doi is not None:
        lines.append(f"  doi = {_render_value(record.doi)},")
    if record.abstract is not None:
        lines.append(f"  abstract = {_render_value(record.abstract)},")
    if record.keywords:
        lines.append(f"  keywords = {_render_value(', '.join(record.keywords))},")
    for name, value in record.extra:
        lines.append(f"  {name} = {_render_value(value)},")
    lines.append("}")
    return "\n".join(lines)


def render_bib(records: list[StudyRecord], header: str | None = None) -> str:
    """Render records as a BibTeX document in canonical order.

    The output re-parses (strict) to records equal to `canonical_sort(records)`.
    """
    out = [f"% {header}" if header else "% slrwatch corpus export"]
    for record in canonical_sort(records):
        out.append("")
        out.append(render_entry(record))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Deduplication and cleanup


def dedup(records: list[StudyRecord]) -> tuple[list[StudyRecord], list[DuplicateCluster]]:
    """Collapse records sharing a fingerprint; first occurrence represents the group."""
    by_print: dict[str, list[StudyRecord]] = {}
    order: list[str] = []
    for record in records:
        value = fingerprint(record).value
        if value not in by_print:
            by_print[value] = []
            order.append(value)
        by_print[value].append(record)
    unique = [by_print[value][0] for value in order]
    clusters = [
        DuplicateCluster(
            representative=group[0].id,
            members=tuple(r.id for r in group),
        )
        for value in order
        if len(group := by_print[value]) >= 2
    ]
    return unique, clusters


def filter_non_studies(
    records: list[StudyRecord],
    patterns: tuple[str, ...] = DEFAULT_NON_STUDY_PATTERNS,
) -> tuple[list[StudyRecord], list[Removal]]:
    """Drop announcement-style noise; each removal names the rule that fired."""
    kept: list[StudyRecord] = []
    removed: list[Removal] = []
    for record in records:
        if not record.authors:
            removed.append(Removal(record, "empty author list"))
            continue
        lowered = record.title.lower()
        hit = next((p for p in patterns if p in lowered), None)
        if hit is not None:
            removed.append(Removal(record, f"title pattern {hit!r}"))
            continue
        kept.append(record)
    return kept, removed


def to_csv(records: list[StudyRecord]) -> str:
    """CSV export with fixed column order (id, title, authors, year, venue, doi, keywords)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in canonical_sort(records):
        writer.writerow([
            record.id,
            record.title,
            "; ".join(record.authors),
            record.year,
            record.venue or "",
            record.doi or "",
            "; ".join(record.keywords),
        ])
    return buf.getvalue()
