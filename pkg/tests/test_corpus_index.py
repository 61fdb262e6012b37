import random
import time

import pytest

from datarefs.catalog import QueryKind, SearchQuery
from datarefs.corpus_index import (
    CandidateDoc,
    CorpusDoc,
    build_index,
    dedup_against_bibliography,
    search_catalog,
    search_phrase,
    tokenize,
)
from datarefs.corpus_index import _largest_remainder_percentages


def query(phrase, kind=QueryKind.STUDY_NAME, study_id=1):
    return SearchQuery(study_id=study_id, kind=kind, phrase=phrase)


class TestTokenize:
    def test_identifier_stays_whole(self):
        assert tokenize("see 10.3886/ICPSR06635 here") == ["see", "10.3886/icpsr06635", "here"]

    def test_hyphen_and_dot_join_alnum(self):
        assert tokenize("ECLS-K v2.3") == ["ecls-k", "v2.3"]

    def test_underscore_splits(self):
        assert tokenize("file_name_v2") == ["file", "name", "v2"]

    def test_punctuation_is_boundary(self):
        assert tokenize("Survey, 1990 (wave one).") == ["survey", "1990", "wave", "one"]

    def test_trailing_separator_not_absorbed(self):
        assert tokenize("end.") == ["end"]


class TestIndex:
    def test_duplicate_doc_id_rejected(self):
        docs = [CorpusDoc("a", "one"), CorpusDoc("a", "two")]
        with pytest.raises(ValueError, match="duplicate"):
            build_index(docs)

    def test_doc_count_and_doi(self):
        index = build_index([CorpusDoc("a", "x", doi="10.1/a"), CorpusDoc("b", "y")])
        assert index.doc_count == 2
        assert index.doi_of("a") == "10.1/a"
        assert index.doi_of("b") is None


class TestPhraseSearch:
    def test_exact_contiguous_match_only(self):
        index = build_index(
            [
                CorpusDoc("a", "the general social survey is used"),
                CorpusDoc("b", "general survey of social life"),  # words, wrong order
            ]
        )
        hits = search_phrase(index, query("General Social Survey"))
        assert [h.doc_id for h in hits] == ["a"]

    def test_occurrences_and_first_position(self):
        index = build_index([CorpusDoc("a", "panel study data and panel study notes")])
        hits = search_phrase(index, query("panel study"))
        assert hits[0].occurrence_count == 2
        assert hits[0].first_position == 0

    def test_case_insensitive(self):
        index = build_index([CorpusDoc("a", "THE GENERAL SOCIAL SURVEY")])
        assert search_phrase(index, query("general social survey"))

    def test_doi_is_single_token_match(self):
        index = build_index([CorpusDoc("a", "deposit doi 10.3886/ICPSR06635 listed")])
        hits = search_phrase(index, query("10.3886/ICPSR06635", QueryKind.STUDY_DOI))
        assert len(hits) == 1
        # the doi does not match when split across punctuation in the query
        assert not search_phrase(index, query("10.3886 ICPSR06635", QueryKind.STUDY_DOI))

    def test_results_sorted_by_doc_id(self):
        docs = [CorpusDoc(d, "shared phrase here") for d in ("c", "a", "b")]
        hits = search_phrase(build_index(docs), query("shared phrase"))
        assert [h.doc_id for h in hits] == ["a", "b", "c"]

    def test_empty_phrase_matches_nothing(self):
        index = build_index([CorpusDoc("a", "text")])
        assert search_phrase(index, query("...")) == []


def naive_phrase_scan(docs, phrase):
    """Reference implementation: linear scan over every token stream."""
    needle = tokenize(phrase)
    expected = []
    if not needle:
        return expected
    for doc in sorted(docs, key=lambda d: d.doc_id):
        stream = tokenize(doc.text)
        positions = [
            i
            for i in range(len(stream) - len(needle) + 1)
            if stream[i : i + len(needle)] == needle
        ]
        if positions:
            expected.append((doc.doc_id, len(positions), positions[0]))
    return expected


class TestOracleEquivalence:
    def test_matches_naive_scan_on_generated_corpus(self):
        rng = random.Random(20)
        vocab = [f"w{i}" for i in range(80)] + ["survey", "panel", "study", "data"]
        vocab += [f"10.{n}/ID{n}" for n in range(5)]
        docs = [
            CorpusDoc(f"doc{d:03d}", " ".join(rng.choices(vocab, k=rng.randint(40, 160))))
            for d in range(200)
        ]
        index = build_index(docs)

        queries = []
        for _ in range(25):  # phrases lifted from documents, guaranteed present
            doc = rng.choice(docs)
            stream = tokenize(doc.text)
            i = rng.randrange(len(stream) - 3)
            queries.append(" ".join(stream[i : i + rng.randint(1, 3)]))
        for _ in range(25):  # random phrases, often absent
            queries.append(" ".join(rng.choices(vocab, k=rng.randint(1, 4))))

        started = time.perf_counter()
        for phrase in queries:
            hits = search_phrase(index, query(phrase))
            got = [(h.doc_id, h.occurrence_count, h.first_position) for h in hits]
            assert got == naive_phrase_scan(docs, phrase), f"divergence on {phrase!r}"
        assert time.perf_counter() - started < 10.0


class TestTally:
    def test_largest_remainder_reproduces_published_split(self):
        counts = {"name": 6318, "doi": 1614, "number": 1259}
        pct = _largest_remainder_percentages(counts, sum(counts.values()))
        assert pct == {"name": 69, "doi": 17, "number": 14}

    def test_percentages_sum_to_hundred(self):
        rng = random.Random(4)
        for _ in range(200):
            counts = {k: rng.randint(0, 500) for k in "abcd"}
            total = sum(counts.values())
            if total == 0:
                continue
            pct = _largest_remainder_percentages(counts, total)
            assert sum(pct.values()) == 100

    def test_zero_total(self):
        assert _largest_remainder_percentages({"a": 0}, 0) == {"a": 0}


class TestSearchCatalog:
    def test_groups_hits_by_document_and_kind(self):
        docs = [
            CorpusDoc("a", "uses the general social survey and ICPSR 42", doi="10.1/a"),
            CorpusDoc("b", "nothing relevant"),
        ]
        index = build_index(docs)
        queries = [
            query("general social survey", QueryKind.STUDY_NAME, 42),
            query("ICPSR 42", QueryKind.STUDY_NUMBER, 42),
            query("10.3886/ICPSR00042", QueryKind.STUDY_DOI, 42),
        ]
        candidates, tally = search_catalog(index, queries)
        assert [c.doc_id for c in candidates] == ["a"]
        assert candidates[0].doi == "10.1/a"
        assert {h.query.kind for h in candidates[0].matched_queries} == {
            QueryKind.STUDY_NAME,
            QueryKind.STUDY_NUMBER,
        }
        assert tally.counts[QueryKind.STUDY_NAME] == 1
        assert tally.counts[QueryKind.STUDY_NUMBER] == 1
        assert tally.counts[QueryKind.STUDY_DOI] == 0
        assert tally.total == 2


class TestDedup:
    def candidates(self):
        return [
            CandidateDoc("a", "10.1/KNOWN", []),
            CandidateDoc("b", "10.1/new", []),
            CandidateDoc("c", None, []),
        ]

    def test_case_insensitive_doi_removal(self):
        kept = dedup_against_bibliography(self.candidates(), {"10.1/known"})
        assert [c.doc_id for c in kept] == ["b", "c"]

    def test_missing_doi_kept_and_flagged(self):
        kept = dedup_against_bibliography(self.candidates(), set())
        flagged = [c for c in kept if c.missing_doi]
        assert [c.doc_id for c in flagged] == ["c"]

    def test_idempotent(self):
        once = dedup_against_bibliography(self.candidates(), {"10.1/known"})
        twice = dedup_against_bibliography(list(once), {"10.1/known"})
        assert [c.doc_id for c in twice] == [c.doc_id for c in once]
