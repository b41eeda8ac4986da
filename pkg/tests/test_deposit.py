from __future__ import annotations

import random

import pytest
import requests

import gen
from slrwatch.biblio import parse_bib
from slrwatch.deposit import (
    ArchiveAuthError,
    ArchiveUnavailable,
    DepositError,
    DepositRecord,
    HttpArchive,
    LocalDirectoryArchive,
    bundle_hash,
    deposit,
    render_bundle,
)

T1 = "2022-03-05T09:00:00+00:00"
T2 = "2022-04-01T12:00:00+00:00"


def records(seed: int = 401, n: int = 6):
    return gen.corpus(random.Random(seed), n)


def test_render_bundle_shape_and_empty_rejection():
    doc = render_bundle("lin1", records(), T1)
    lines = doc.splitlines()
    assert lines[0] == "% evidence bundle for lineage lin1"
    assert lines[1] == f"% exported_at {T1}"
    parsed, issues = parse_bib(doc, mode="strict")
    assert len(parsed) == 6 and not issues
    with pytest.raises(DepositError):
        render_bundle("lin1", [], T1)


def test_bundle_hash_ignores_timestamp_only():
    recs = records()
    a = render_bundle("lin1", recs, T1)
    b = render_bundle("lin1", recs, T2)
    assert a != b
    assert bundle_hash(a) == bundle_hash(b)
    changed = render_bundle("lin1", recs[:-1], T1)
    assert bundle_hash(changed) != bundle_hash(a)
    other_lineage = render_bundle("lin2", recs, T1)
    assert bundle_hash(other_lineage) != bundle_hash(a)


def test_local_archive_round_trip_bit_exact(tmp_path):
    archive = LocalDirectoryArchive(str(tmp_path / "archive"))
    doc = render_bundle("lin1", records(), T1)
    ref = archive.store(doc)
    assert archive.retrieve(ref) == doc
    with pytest.raises(DepositError):
        archive.retrieve("missing.bib")


def test_deposit_idempotency(tmp_path):
    archive = LocalDirectoryArchive(str(tmp_path / "archive"))
    recs = records()
    ledger: list[DepositRecord] = []

    first, created = deposit(archive, "lin1", render_bundle("lin1", recs, T1),
                             ledger, "dep-0001", T1)
    assert created
    ledger.append(first)

    # Identical content, later timestamp: same record, archive untouched.
    again, created = deposit(archive, "lin1", render_bundle("lin1", recs, T2),
                             ledger, "dep-0002", T2)
    assert not created
    assert again == first

    # Changed content yields a distinct record and hash.
    grown, created = deposit(archive, "lin1",
                             render_bundle("lin1", recs + records(402, 1), T2),
                             ledger, "dep-0002", T2)
    assert created
    assert grown.bundle_hash != first.bundle_hash


class Resp:
    def __init__(self, code: int, body: dict | None = None):
        self.status_code = code
        self._body = body or {}

    def json(self) -> dict:
        return self._body


def test_http_archive_success(monkeypatch):
    monkeypatch.setenv("SLRWATCH_ARCHIVE_TOKEN", "tok")
    seen = {}

    def transport(url, data=None, headers=None, timeout=None):
        seen.update(url=url, headers=headers, body=data.decode("utf-8"))
        return Resp(201, {"reference": "dep/123"})

    archive = HttpArchive("https://zen.example/api/", transport=transport)
    assert archive.store("% bundle\n") == "dep/123"
    assert seen["url"] == "https://zen.example/api/deposits"
    assert seen["headers"]["Authorization"] == "Bearer tok"


def test_http_archive_error_classes():
    def down(url, data=None, headers=None, timeout=None):
        raise requests.ConnectionError("refused")

    with pytest.raises(ArchiveUnavailable):
        HttpArchive("https://zen.example", transport=down).store("x")
    with pytest.raises(ArchiveUnavailable):
        HttpArchive("https://zen.example",
                    transport=lambda *a, **k: Resp(503)).store("x")
    with pytest.raises(ArchiveAuthError):
        HttpArchive("https://zen.example",
                    transport=lambda *a, **k: Resp(401)).store("x")
    with pytest.raises(DepositError):
        HttpArchive("https://zen.example",
                    transport=lambda *a, **k: Resp(422)).store("x")
