from __future__ import annotations

import random

import pytest

import gen
from slrwatch.biblio import (
    BibParseError,
    EntryKind,
    FingerprintBasis,
    StudyRecord,
    RecordError,
    canonical_sort,
    dedup,
    filter_non_studies,
    fingerprint,
    normalize_doi,
    parse_bib,
    render_bib,
    render_entry,
    title_key,
    to_csv,
)


def test_record_validation():
    ok = StudyRecord(id="a", kind=EntryKind.ARTICLE, title="T", authors=("X Y",), year=2000)
    assert ok.year == 2000
    with pytest.raises(RecordError):
        StudyRecord(id="", kind=EntryKind.ARTICLE, title="T", authors=(), year=2000)
    with pytest.raises(RecordError):
        StudyRecord(id="a", kind=EntryKind.ARTICLE, title="  ", authors=(), year=2000)
    with pytest.raises(RecordError):
        StudyRecord(id="a", kind=EntryKind.ARTICLE, title="T", authors=(), year=1899)
    with pytest.raises(RecordError):
        StudyRecord(id="a", kind=EntryKind.ARTICLE, title="T", authors=(), year=2101)
    with pytest.raises(RecordError):
        StudyRecord(id="a", kind=EntryKind.ARTICLE, title="T", authors=(), year=2000, month=13)
    with pytest.raises(RecordError):
        StudyRecord(id="a", kind=EntryKind.ARTICLE, title="T", authors=(), year=2000, doi="not-a-doi")
    with pytest.raises(RecordError):
        StudyRecord(id="a", kind=EntryKind.ARTICLE, title="T", authors=(), year=2000, keywords=("", "x"))


def test_doi_normalization():
    assert normalize_doi("10.1000/ABC") == "10.1000/abc"
    assert normalize_doi("https://doi.org/10.1000/abc") == "10.1000/abc"
    assert normalize_doi("doi:10.1000/abc") == "10.1000/abc"
    assert normalize_doi(" http://dx.doi.org/10.1000/Abc ") == "10.1000/abc"


def test_title_key_folds_case_space_punctuation_diacritics():
    assert title_key("Cross-Company Effort Estimation") == title_key(
        "cross company  effort estimation!"
    )
    assert title_key("Étude empirique") == title_key("etude EMPIRIQUE")


def test_fingerprint_doi_priority():
    a = StudyRecord(id="a", kind=EntryKind.ARTICLE, title="Alpha", authors=("X",),
                    year=2001, doi="10.1/x")
    b = StudyRecord(id="b", kind=EntryKind.MISC, title="Totally different", authors=("Y",),
                    year=2015, doi="10.1/x")
    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(a).basis is FingerprintBasis.DOI


def test_fingerprint_title_year_fallback():
    a = StudyRecord(id="a", kind=EntryKind.ARTICLE, title="Cross-Company Estimation",
                    authors=("X",), year=2001)
    b = StudyRecord(id="b", kind=EntryKind.ARTICLE, title="cross company estimation",
                    authors=("Y",), year=2001)
    c = StudyRecord(id="c", kind=EntryKind.ARTICLE, title="cross company estimation",
                    authors=("Y",), year=2002)
    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(b) != fingerprint(c)
    assert fingerprint(a).basis is FingerprintBasis.NORMALIZED_TITLE_YEAR


def test_render_parse_round_trip_equality():
    rng = random.Random(101)
    records = gen.corpus(rng, 60)
    text = render_bib(records)
    parsed, issues = parse_bib(text, mode="strict")
    assert issues == []
    assert parsed == canonical_sort(records)


def test_render_is_canonical_and_stable():
    rng = random.Random(102)
    records = gen.corpus(rng, 40)
    shuffled = records[:]
    rng.shuffle(shuffled)
    assert render_bib(records) == render_bib(shuffled)
    # Canonical order is (year, fingerprint) ascending.
    ordered = canonical_sort(records)
    keys = [(r.year, fingerprint(r).value) for r in ordered]
    assert keys == sorted(keys)


def test_parse_venue_field_per_kind():
    text = """
@article{a1, title = {A}, author = {X Y}, year = {2001}, journal = {J} }
@inproceedings{c1, title = {B}, author = {X Y}, year = {2002}, booktitle = {Proc} }
@techreport{t1, title = {C}, author = {X Y}, year = {2003}, institution = {Inst} }
@misc{m1, title = {D}, author = {X Y}, year = {2004}, howpublished = {Web} }
"""
    records, issues = parse_bib(text)
    assert issues == []
    assert [r.venue for r in records] == ["J", "Proc", "Inst", "Web"]
    assert [r.kind for r in records] == [
        EntryKind.ARTICLE, EntryKind.INPROCEEDINGS, EntryKind.TECHREPORT, EntryKind.MISC,
    ]


def test_parse_unknown_kind_becomes_misc_and_keeps_fields():
    records, issues = parse_bib(
        "@phdthesis{p1, title={T}, author={A B}, year={1999}, school={U}}"
    )
    assert issues == []
    assert records[0].kind is EntryKind.MISC
    assert ("school", "U") in records[0].extra


def test_parse_months():
    records, _ = parse_bib(
        "@misc{m1, title={T}, author={A}, year={2000}, month={feb}}\n"
        "@misc{m2, title={T2}, author={A}, year={2000}, month={11}}\n"
        "@misc{m3, title={T3}, author={A}, year={2000}, month={September}}"
    )
    assert [r.month for r in records] == [2, 11, 9]


def test_parse_ignores_comments_and_free_text():
    text = """
Stray prose between entries is not an entry.
@comment{anything goes here}
@string{js = {Journal}}
@article{a1, title = {Kept}, author = {X}, year = {2020}, journal = {J}}
"""
    records, issues = parse_bib(text)
    assert issues == []
    assert [r.id for r in records] == ["a1"]


def test_tolerant_parse_skips_bad_entries_with_line_numbers():
    rng = random.Random(103)
    records = gen.corpus(rng, 10)
    text = render_bib(records)
    # Corrupt three entries in distinct ways: no year, bad key, missing '='.
    text += "\n@article{noyear, title = {X}, author = {A}}\n"
    text += "\n@article{bad key, title = {Y}, author = {A}, year = {2000}}\n"
    text += "\n@article{nofield, title = {Z}, author = {A}, year = {2000}, oops}\n"
    parsed, issues = parse_bib(text, mode="tolerant")
    assert len(parsed) == 10
    assert len(issues) == 3
    lines = text.splitlines()
    for issue in issues:
        assert lines[issue.line - 1].lstrip().startswith("@article")


def test_strict_parse_raises_on_first_bad_entry():
    text = "@article{a1, title={T}, author={A}, year={bad}}"
    with pytest.raises(BibParseError) as err:
        parse_bib(text, mode="strict")
    assert err.value.line == 1


def test_parse_rejects_non_utf8_bytes_in_both_modes():
    blob = b"@misc{m1, title={T\xff}, author={A}, year={2000}}"
    with pytest.raises(BibParseError):
        parse_bib(blob, mode="strict")
    with pytest.raises(BibParseError):
        parse_bib(blob, mode="tolerant")


def test_tolerant_parse_never_raises_on_mangled_text():
    rng = random.Random(104)
    base = render_bib(gen.corpus(rng, 15))
    for trial in range(50):
        chars = list(base)
        for _ in range(rng.randint(1, 12)):
            pos = rng.randrange(len(chars))
            chars[pos] = rng.choice("{}@,=\"x ")
        mangled = "".join(chars)
        parsed, issues = parse_bib(mangled, mode="tolerant")
        for r in parsed:
            assert isinstance(r, StudyRecord)


def test_dedup_matches_pairwise_oracle():
    rng = random.Random(105)
    base = gen.corpus(rng, 80)
    # Re-insert shuffled copies of some records under new ids.
    records = base[:]
    for i, src in enumerate(rng.sample(base, 25)):
        records.append(StudyRecord(
            id=f"dup{i:03d}", kind=src.kind, title=src.title.upper(),
            authors=src.authors, year=src.year, doi=src.doi,
        ))
    rng.shuffle(records)

    unique, clusters = dedup(records)

    # Oracle: quadratic pairwise comparison on the same equivalence rule.
    def same(a: StudyRecord, b: StudyRecord) -> bool:
        if a.doi and b.doi:
            return normalize_doi(a.doi) == normalize_doi(b.doi)
        if a.doi or b.doi:
            return False
        return title_key(a.title) == title_key(b.title) and a.year == b.year

    expected: list[StudyRecord] = []
    for r in records:
        if not any(same(r, kept) for kept in expected):
            expected.append(r)
    assert [r.id for r in unique] == [r.id for r in expected]
    assert sum(len(c.members) - 1 for c in clusters) == len(records) - len(unique)
    for cluster in clusters:
        assert cluster.representative == cluster.members[0]


def test_filter_non_studies_rules():
    keep = StudyRecord(id="k", kind=EntryKind.ARTICLE, title="A real study",
                       authors=("X",), year=2000)
    cfp = StudyRecord(id="c", kind=EntryKind.MISC, title="Call for Papers: SE 2020",
                      authors=("X",), year=2020)
    orphan = StudyRecord(id="o", kind=EntryKind.MISC, title="Untitled note",
                         authors=(), year=2020)
    kept, removed = filter_non_studies([keep, cfp, orphan])
    assert [r.id for r in kept] == ["k"]
    rules = {r.record.id: r.rule for r in removed}
    assert "call for papers" in rules["c"]
    assert rules["o"] == "empty author list"


def test_csv_export_columns_and_order():
    rng = random.Random(106)
    records = gen.corpus(rng, 5)
    out = to_csv(records)
    lines = out.strip().splitlines()
    assert lines[0] == "id,title,authors,year,venue,doi,keywords"
    assert len(lines) == 6


def test_render_entry_single_record_shape():
    r = StudyRecord(id="x1", kind=EntryKind.ARTICLE, title="T", authors=("A B", "C D"),
                    year=2010, month=3, venue="J", doi="10.1/y", keywords=("k1", "k2"))
    text = render_entry(r)
    assert text.startswith("@article{x1,")
    assert "author = {A B and C D}" in text
    assert "month = {3}" in text
    assert "keywords = {k1, k2}" in text
    assert text.endswith("}")
