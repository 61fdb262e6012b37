"""Positional inverted index over document full text with exact phrase
search, a local stand-in for a commercial full-text platform.

Tokenization keeps identifier-like strings whole: '.', '/', and '-' stay
inside a token when flanked by alphanumerics, so "10.3886/ICPSR06635" is
a single token and DOI queries are single-token exact matches. Matching
is token-exact and case-insensitive; fuzzy comparison belongs to the
linkage stage, not retrieval.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .catalog import QueryKind, SearchQuery

# Maximal alphanumeric runs, optionally joined by . / - between alnums.
_TOKEN = re.compile(r"[^\W_]+(?:[./-][^\W_]+)*", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass
class CorpusDoc:
    doc_id: str
    text: str
    doi: Optional[str] = None


@dataclass(frozen=True)
class Hit:
    doc_id: str
    query: SearchQuery
    occurrence_count: int
    first_position: int


@dataclass
class CandidateDoc:
    doc_id: str
    doi: Optional[str]
    matched_queries: list[Hit]
    missing_doi: bool = False


@dataclass
class TallyByKind:
    counts: dict[QueryKind, int]
    percentages: dict[QueryKind, int]
    total: int


class PositionalIndex:
    """Immutable after build; queries are read-only and freely concurrent."""

    def __init__(self) -> None:
        self._postings: dict[str, dict[str, list[int]]] = {}
        self._docs: dict[str, Optional[str]] = {}

    @property
    def doc_count(self) -> int:
        return len(self._docs)

    def doc_ids(self) -> list[str]:
        return list(self._docs)

    def doi_of(self, doc_id: str) -> Optional[str]:
        return self._docs[doc_id]

    def _add_document(self, doc: CorpusDoc) -> None:
        if doc.doc_id in self._docs:
            raise ValueError(f"duplicate doc_id: {doc.doc_id!r}")
        self._docs[doc.doc_id] = doc.doi
        for position, token in enumerate(tokenize(doc.text)):
            self._postings.setdefault(token, {}).setdefault(doc.doc_id, []).append(
                position
            )

    def positions(self, token: str, doc_id: str) -> list[int]:
        return self._postings.get(token, {}).get(doc_id, [])

    def docs_with_token(self, token: str) -> set[str]:
        return set(self._postings.get(token, {}))


def build_index(corpus: Iterable[CorpusDoc]) -> PositionalIndex:
    index = PositionalIndex()
    for doc in corpus:
        index._add_document(doc)
    return index


def search_phrase(index: PositionalIndex, query: SearchQuery) -> list[Hit]:
    """Documents containing the query phrase as a contiguous token
    sequence under the shared tokenization. Results ordered by doc_id."""
    tokens = tokenize(query.phrase)
    if not tokens:
        return []

    candidates = index.docs_with_token(tokens[0])
    for token in tokens[1:]:
        candidates &= index.docs_with_token(token)
        if not candidates:
            return []

    hits = []
    for doc_id in sorted(candidates):
        later = [set(index.positions(token, doc_id)) for token in tokens[1:]]
        starts = [
            p
            for p in index.positions(tokens[0], doc_id)
            if all(p + offset + 1 in positions for offset, positions in enumerate(later))
        ]
        if starts:
            hits.append(
                Hit(
                    doc_id=doc_id,
                    query=query,
                    occurrence_count=len(starts),
                    first_position=starts[0],
                )
            )
    return hits


def _largest_remainder_percentages(
    counts: dict[QueryKind, int], total: int
) -> dict[QueryKind, int]:
    """Integer percentages that sum to exactly 100 for nonzero totals."""
    if total == 0:
        return {kind: 0 for kind in counts}
    shares = {kind: 100 * count / total for kind, count in counts.items()}
    floors = {kind: int(share) for kind, share in shares.items()}
    leftover = 100 - sum(floors.values())
    by_remainder = sorted(
        counts, key=lambda kind: (floors[kind] - shares[kind], list(counts).index(kind))
    )
    for kind in by_remainder[:leftover]:
        floors[kind] += 1
    return floors


def search_catalog(
    index: PositionalIndex, queries: Iterable[SearchQuery]
) -> tuple[list[CandidateDoc], TallyByKind]:
    """Run every query, group hits by document, and tally hits per query
    kind. A document matching several kinds contributes to each tally."""
    by_doc: dict[str, list[Hit]] = {}
    counts = {kind: 0 for kind in QueryKind}
    for query in queries:
        for hit in search_phrase(index, query):
            by_doc.setdefault(hit.doc_id, []).append(hit)
            counts[hit.query.kind] += 1

    candidates = [
        CandidateDoc(doc_id=doc_id, doi=index.doi_of(doc_id), matched_queries=hits)
        for doc_id, hits in sorted(by_doc.items())
    ]
    total = sum(counts.values())
    tally = TallyByKind(
        counts=counts,
        percentages=_largest_remainder_percentages(counts, total),
        total=total,
    )
    return candidates, tally


def dedup_against_bibliography(
    candidates: Iterable[CandidateDoc], bibliography: set[str]
) -> list[CandidateDoc]:
    """Drop candidates whose DOI (case-insensitive) is already collected.
    Candidates without a DOI cannot be deduplicated; they are kept and
    flagged for manual checking. Idempotent and order-preserving."""
    known = {doi.lower() for doi in bibliography}
    kept = []
    for candidate in candidates:
        if candidate.doi is None:
            candidate.missing_doi = True
            kept.append(candidate)
        elif candidate.doi.lower() not in known:
            kept.append(candidate)
    return kept


def load_corpus(source: str) -> list[CorpusDoc]:
    """Load documents for indexing from a manifest file of records
    {doc_id, doi?, path, format: tei|txt|structured} with paths relative
    to the manifest, or from a directory of .tei.xml/.xml/.txt files."""
    from pathlib import Path

    from . import docparse
    from .jsonl import read_jsonl

    root = Path(source)
    docs: list[CorpusDoc] = []
    if root.is_dir():
        for path in sorted(root.iterdir()):
            suffix = path.name.lower()
            if suffix.endswith((".tei.xml", ".xml")):
                fmt = "tei"
            elif suffix.endswith(".txt"):
                fmt = "txt"
            else:
                continue
            doc_id = path.name.split(".")[0]
            docs.append(_corpus_doc(doc_id, None, path, fmt))
        return docs
    for record in read_jsonl(root):
        path = root.parent / record["path"]
        docs.append(
            _corpus_doc(record["doc_id"], record.get("doi"), path, record["format"])
        )
    return docs


def _corpus_doc(doc_id: str, doi: Optional[str], path, fmt: str) -> CorpusDoc:
    from . import docparse

    raw = path.read_text(encoding="utf-8")
    if fmt == "tei":
        doc = docparse.parse_tei(raw, doc_id=doc_id)
        text = doc.full_text()
        doi = doi or doc.doi
    elif fmt == "txt":
        text = raw
    elif fmt == "structured":
        import json

        doc = docparse.document_from_record(json.loads(raw.splitlines()[0]))
        text = doc.full_text()
        doi = doi or doc.doi
    else:
        raise ValueError(f"unknown corpus format: {fmt!r} for {doc_id}")
    return CorpusDoc(doc_id=doc_id, text=text, doi=doi)
