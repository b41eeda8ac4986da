"""Deterministic corpus bundles deposited to an archive, idempotently.

A bundle is the canonical BibTeX rendering of the records plus two header
lines naming the lineage and the export time. The content hash ignores the
timestamp line, so re-exporting unchanged content always produces the same
hash and the archive never stores the same evidence twice.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

from .biblio import StudyRecord, render_bib


class DepositError(ValueError):
    """The deposit request itself is invalid (nothing to export, bad bundle)."""


class ArchiveUnavailable(RuntimeError):
    """The archive could not be reached; safe to retry later."""


class ArchiveAuthError(RuntimeError):
    """The archive rejected our credentials; retrying will not help."""


_TIMESTAMP_LINE = re.compile(r"^% exported_at .*$", re.MULTILINE)


def render_bundle(lineage_id: str, records: list[StudyRecord], exported_at: str) -> str:
    """Export records for one lineage; canonical order, timestamped header."""
    if not records:
        raise DepositError(
            f"lineage {lineage_id}: no included candidates to export; screen first"
        )
    body = render_bib(records, header=f"evidence bundle for lineage {lineage_id}")
    lines = body.splitlines()
    lines.insert(1, f"% exported_at {exported_at}")
    return "\n".join(lines) + "\n"


def bundle_hash(document: str) -> str:
    """Content hash of a bundle, excluding the volatile timestamp header."""
    stable = _TIMESTAMP_LINE.sub("", document)
    return hashlib.sha256(stable.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DepositRecord:
    id: str
    lineage_id: str
    bundle_hash: str
    archive_name: str
    archive_reference: str
    deposited_at: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "lineage_id": self.lineage_id,
            "bundle_hash": self.bundle_hash,
            "archive_name": self.archive_name,
            "archive_reference": self.archive_reference,
            "deposited_at": self.deposited_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DepositRecord":
        return cls(**data)


class LocalDirectoryArchive:
    """Content-addressed files in a directory; the reference is the filename."""

    name = "local"

    def __init__(self, path: str):
        self.path = Path(path)

    def store(self, content: str) -> str:
        self.path.mkdir(parents=True, exist_ok=True)
        filename = f"{bundle_hash(content)}.bib"
        target = self.path / filename
        if not target.exists():
            tmp = target.with_suffix(".tmp")
            tmp.write_text(content, encoding="utf-8")
            os.replace(tmp, target)
        return filename

    def retrieve(self, reference: str) -> str:
        target = self.path / reference
        if not target.exists():
            raise DepositError(f"no deposit {reference!r} in {self.path}")
        return target.read_text(encoding="utf-8")


class HttpArchive:
    """PUTs bundles to {base_url}/deposits with a bearer token from the environment."""

    name = "http"

    def __init__(
        self,
        base_url: str,
        token_env: str = "SLRWATCH_ARCHIVE_TOKEN",
        transport: Callable[..., object] | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self._token = os.environ.get(token_env) if token_env else None
        self._transport = transport or requests.put

    def store(self, content: str) -> str:
        headers = {"Content-Type": "application/x-bibtex"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        try:
            response = self._transport(
                f"{self.base_url}/deposits", data=content.encode("utf-8"),
                headers=headers, timeout=60,
            )
            status = response.status_code
        except requests.RequestException as exc:
            raise ArchiveUnavailable(f"archive unreachable: {exc}")
        if status in (401, 403):
            raise ArchiveAuthError(f"archive rejected credentials (HTTP {status})")
        if status >= 500:
            raise ArchiveUnavailable(f"archive error (HTTP {status})")
        if not 200 <= status < 300:
            raise DepositError(f"archive refused the bundle (HTTP {status})")
        return response.json().get("reference", bundle_hash(content))


def deposit(
    archive,
    lineage_id: str,
    document: str,
    existing: list[DepositRecord],
    deposit_id: str,
    at: str,
) -> tuple[DepositRecord, bool]:
    """Store a bundle unless this archive already holds identical content.

    Returns (record, created). With created False the returned record is the
    prior one and the archive was not touched.
    """
    digest = bundle_hash(document)
    for record in existing:
        if record.archive_name == archive.name and record.bundle_hash == digest:
            return record, False
    reference = archive.store(document)
    record = DepositRecord(
        id=deposit_id,
        lineage_id=lineage_id,
        bundle_hash=digest,
        archive_name=archive.name,
        archive_reference=reference,
        deposited_at=at,
    )
    return record, True
