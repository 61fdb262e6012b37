"""Fuzzy matching of detected entity surfaces to catalog study names and
the three-way partition: catalog dataset, external dataset, non-dataset.

The score is a hybrid of token overlap and character trigrams. Tokens
are weighted by inverse log document frequency over the catalog's name
vocabulary, so rare tokens dominate the comparison the way they do in
probabilistic record linkage. The centered score (similarity minus the
decision threshold) puts the catalog-match boundary at zero.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

from .catalog import CatalogStudy
from .extract import DataReference

log = logging.getLogger(__name__)

DEFAULT_THETA = 0.75
DEFAULT_FLOOR = 0.30
TOKEN_WEIGHT = 0.7
TRIGRAM_WEIGHT = 0.3

_YEAR_TOKEN = re.compile(r"(?:1[89]|20)\d{2}$")
_PUNCT = re.compile(r"[^\w\s-]|_", re.UNICODE)


class Partition(str, Enum):
    CATALOG_DATASET = "catalog_dataset"
    EXTERNAL_DATASET = "external_dataset"
    NON_DATASET = "non_dataset"


@dataclass(frozen=True)
class LinkResult:
    reference: DataReference
    best_study: Optional[int]
    similarity: float
    centered_score: float
    partition: Partition


@dataclass
class PartitionSummary:
    reference_counts: dict[Partition, int]
    publication_counts: dict[Partition, int]
    review_queue: list[LinkResult]  # catalog matches, for bibliography review
    acquisitions: list[LinkResult]  # external datasets, for the acquisitions team


def normalize_name(text: str) -> str:
    """Lowercase, collapse whitespace, strip punctuation except hyphens,
    drop standalone 4-digit years ("ANES 1984" matches the series name)."""
    lowered = _PUNCT.sub(" ", text.lower())
    tokens = [t for t in lowered.split() if not _YEAR_TOKEN.fullmatch(t)]
    return " ".join(tokens)


def _trigrams(text: str) -> set[str]:
    if len(text) < 3:
        return {text} if text else set()
    return {text[i : i + 3] for i in range(len(text) - 2)}


class NameVocabulary:
    """Token weights from catalog name document frequencies. Rare tokens
    get weight near 1/log 2, ubiquitous ones decay toward zero."""

    def __init__(self, names: Iterable[str]):
        self._df: dict[str, int] = {}
        for name in names:
            for token in set(normalize_name(name).split()):
                self._df[token] = self._df.get(token, 0) + 1

    def weight(self, token: str) -> float:
        return 1.0 / math.log(2 + self._df.get(token, 0))


def similarity(
    entity_surface: str, study_name: str, vocabulary: NameVocabulary
) -> float:
    """Hybrid score in [0, 1]: weighted token Jaccard plus trigram Dice.
    Identical normalized strings score exactly 1.0; strings sharing no
    tokens and no trigrams score 0.0."""
    a = normalize_name(entity_surface)
    b = normalize_name(study_name)
    if not a or not b:
        log.warning("empty string after normalization: %r / %r", entity_surface, study_name)
        return 0.0
    if a == b:
        return 1.0

    tokens_a, tokens_b = set(a.split()), set(b.split())
    union_weight = sum(vocabulary.weight(t) for t in tokens_a | tokens_b)
    shared_weight = sum(vocabulary.weight(t) for t in tokens_a & tokens_b)
    token_score = shared_weight / union_weight if union_weight else 0.0

    grams_a, grams_b = _trigrams(a), _trigrams(b)
    gram_score = 2 * len(grams_a & grams_b) / (len(grams_a) + len(grams_b))

    return TOKEN_WEIGHT * token_score + TRIGRAM_WEIGHT * gram_score


class Linker:
    """Precomputed name list and vocabulary; per-reference linking is then
    read-only and freely parallel."""

    def __init__(
        self,
        catalog: Sequence[CatalogStudy],
        theta: float = DEFAULT_THETA,
        floor: float = DEFAULT_FLOOR,
    ):
        if not 0 <= floor < theta <= 1:
            raise ValueError(f"need 0 <= floor < theta <= 1, got floor={floor} theta={theta}")
        self.theta = theta
        self.floor = floor
        # (study_id, name, canonical_rank): canonical sorts before variants
        self._names: list[tuple[int, str, int]] = []
        for study in catalog:
            self._names.append((study.study_id, study.canonical_name, 0))
            for variant in study.name_variants:
                self._names.append((study.study_id, variant, 1))
        self.vocabulary = NameVocabulary(name for _, name, _ in self._names)

    def best_match(self, surface: str) -> tuple[Optional[int], float]:
        """Argmax of similarity over all names and variants; ties broken by
        lowest study_id, then canonical before variant."""
        best: tuple[float, int, int] | None = None  # (-sim, study_id, rank)
        best_study: Optional[int] = None
        best_sim = 0.0
        for study_id, name, rank in self._names:
            sim = similarity(surface, name, self.vocabulary)
            key = (-sim, study_id, rank)
            if best is None or key < best:
                best = key
                best_study = study_id
                best_sim = sim
        return best_study, best_sim

    def link(self, reference: DataReference) -> LinkResult:
        best_study, sim = self.best_match(reference.surface)
        centered = sim - self.theta
        if centered >= 0:
            partition = Partition.CATALOG_DATASET
        elif sim >= self.floor:
            partition = Partition.EXTERNAL_DATASET
        else:
            partition = Partition.NON_DATASET
        return LinkResult(
            reference=reference,
            best_study=best_study if partition is Partition.CATALOG_DATASET else None,
            similarity=sim,
            centered_score=centered,
            partition=partition,
        )


def link_entity(
    reference: DataReference,
    catalog: Sequence[CatalogStudy],
    theta: float = DEFAULT_THETA,
    floor: float = DEFAULT_FLOOR,
) -> LinkResult:
    """One-shot convenience wrapper; batch callers should reuse a Linker."""
    return Linker(catalog, theta=theta, floor=floor).link(reference)


def link_references(
    references: Iterable[DataReference],
    catalog: Sequence[CatalogStudy],
    theta: float = DEFAULT_THETA,
    floor: float = DEFAULT_FLOOR,
) -> list[LinkResult]:
    linker = Linker(catalog, theta=theta, floor=floor)
    return [linker.link(ref) for ref in references]


def partition_summary(links: Iterable[LinkResult]) -> PartitionSummary:
    """Per-partition reference and distinct-publication counts, plus the
    two routing lists for downstream teams."""
    reference_counts = {p: 0 for p in Partition}
    docs: dict[Partition, set[str]] = {p: set() for p in Partition}
    review_queue: list[LinkResult] = []
    acquisitions: list[LinkResult] = []
    for link in links:
        reference_counts[link.partition] += 1
        docs[link.partition].add(link.reference.sentence.doc_id)
        if link.partition is Partition.CATALOG_DATASET:
            review_queue.append(link)
        elif link.partition is Partition.EXTERNAL_DATASET:
            acquisitions.append(link)
    return PartitionSummary(
        reference_counts=reference_counts,
        publication_counts={p: len(d) for p, d in docs.items()},
        review_queue=review_queue,
        acquisitions=acquisitions,
    )


def link_to_record(link: LinkResult) -> dict:
    ref = link.reference
    return {
        "doc_id": ref.sentence.doc_id,
        "section_index": ref.sentence.section_index,
        "sentence_index": ref.sentence.sentence_index,
        "start": ref.start,
        "end": ref.end,
        "surface": ref.surface,
        "study_id": link.best_study,
        "similarity": link.similarity,
        "centered_score": link.centered_score,
        "partition": link.partition.value,
        "source": ref.source.value,
        "confidence": ref.confidence,
    }
