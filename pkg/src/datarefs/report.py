"""Corpus-level analytics: where references sit in documents, how
datasets co-occur, and how bibliography coverage spreads over decades
and topical archives.

Reports are pure functions of their inputs and render both as
machine-readable dicts and aligned plain-text tables; rerunning on
identical inputs is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .catalog import CatalogStudy
from .docparse import Document, SectionLabel
from .jsonl import read_jsonl
from .linkage import LinkResult, Partition, normalize_name


@dataclass(frozen=True)
class BibliographyEntry:
    identifier: str  # usually a DOI
    year: Optional[int] = None
    study_ids: tuple[int, ...] = ()


def load_bibliography(path) -> list[BibliographyEntry]:
    entries = []
    for record in read_jsonl(path):
        entries.append(
            BibliographyEntry(
                identifier=str(record.get("doi") or record.get("identifier") or ""),
                year=record.get("year"),
                study_ids=tuple(record.get("study_ids", ())),
            )
        )
    return entries


def bibliography_identifiers(entries: Iterable[BibliographyEntry]) -> set[str]:
    return {e.identifier.lower() for e in entries if e.identifier}


# ---------------------------------------------------------------------------
# Section histogram


@dataclass
class SectionHistogram:
    counts: dict[SectionLabel, int]
    examples: dict[SectionLabel, str]  # one sentence per label

    def to_dict(self) -> dict:
        return {
            "counts": {label.value: n for label, n in self.counts.items()},
            "examples": {label.value: s for label, s in self.examples.items()},
        }


def section_histogram(
    links: Sequence[LinkResult], docs: Sequence[Document]
) -> SectionHistogram:
    """Catalog-dataset references per normalized section label, with the
    highest-similarity reference's sentence as the example for each label.
    Links whose section cannot be resolved are dropped."""
    label_of: dict[tuple[str, int], SectionLabel] = {}
    order: dict[str, int] = {}
    for i, doc in enumerate(docs):
        order[doc.doc_id] = i
        for k, section in enumerate(doc.sections):
            label_of[(doc.doc_id, k)] = section.label

    counts: dict[SectionLabel, int] = {}
    best: dict[SectionLabel, tuple] = {}  # sort key of current example
    examples: dict[SectionLabel, str] = {}
    for link in links:
        if link.partition is not Partition.CATALOG_DATASET:
            continue
        sentence = link.reference.sentence
        label = label_of.get((sentence.doc_id, sentence.section_index))
        if label is None:
            continue
        counts[label] = counts.get(label, 0) + 1
        key = (
            -link.similarity,
            order.get(sentence.doc_id, 0),
            sentence.section_index,
            sentence.sentence_index,
        )
        if label not in best or key < best[label]:
            best[label] = key
            examples[label] = sentence.text
    ordered = dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0].value)))
    return SectionHistogram(counts=ordered, examples=examples)


# ---------------------------------------------------------------------------
# Co-reference statistics


@dataclass(frozen=True)
class Share:
    count: int
    total: int

    @property
    def fraction(self) -> float:
        return self.count / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {"count": self.count, "total": self.total, "fraction": self.fraction}


@dataclass
class CoreferenceStats:
    pubs_with_any_reference: Share
    pubs_mixing_types: Share
    datasets_coreferenced: Share
    sentences_with_entity: Share

    def to_dict(self) -> dict:
        return {
            "pubs_with_any_reference": self.pubs_with_any_reference.to_dict(),
            "pubs_mixing_types": self.pubs_mixing_types.to_dict(),
            "datasets_coreferenced": self.datasets_coreferenced.to_dict(),
            "sentences_with_entity": self.sentences_with_entity.to_dict(),
        }


def coreference_stats(
    links: Sequence[LinkResult],
    docs: Sequence[Document],
    identity: str = "surface",
) -> CoreferenceStats:
    """Dataset identity defaults to the normalized surface string;
    identity="study" keys on the linked study instead (catalog matches
    only)."""
    by_doc: dict[str, list[LinkResult]] = {}
    for link in links:
        by_doc.setdefault(link.reference.sentence.doc_id, []).append(link)

    bearing = [doc.doc_id for doc in docs if by_doc.get(doc.doc_id)]
    pubs_any = Share(len(bearing), len(docs))

    mixing = 0
    for doc_id in bearing:
        partitions = {l.partition for l in by_doc[doc_id]}
        if {Partition.CATALOG_DATASET, Partition.EXTERNAL_DATASET} <= partitions:
            mixing += 1
    pubs_mixing = Share(mixing, len(bearing))

    def identity_of(link: LinkResult):
        if identity == "study":
            return link.best_study
        return normalize_name(link.reference.surface)

    doc_identities: dict[str, set] = {}
    for doc_id, doc_links in by_doc.items():
        ids = {
            identity_of(l)
            for l in doc_links
            if l.partition is not Partition.NON_DATASET and identity_of(l)
        }
        if ids:
            doc_identities[doc_id] = ids
    all_identities = set().union(*doc_identities.values()) if doc_identities else set()
    coreferenced = {
        i
        for ids in doc_identities.values()
        if len(ids) >= 2
        for i in ids
    }
    datasets_coref = Share(len(coreferenced), len(all_identities))

    total_sentences = sum(1 for doc in docs for _ in doc.iter_sentences())
    with_entity = {
        (l.reference.sentence.doc_id, l.reference.sentence.section_index,
         l.reference.sentence.sentence_index)
        for l in links
    }
    sentence_share = Share(len(with_entity), total_sentences)

    return CoreferenceStats(
        pubs_with_any_reference=pubs_any,
        pubs_mixing_types=pubs_mixing,
        datasets_coreferenced=datasets_coref,
        sentences_with_entity=sentence_share,
    )


# ---------------------------------------------------------------------------
# Bibliography coverage


@dataclass(frozen=True)
class ArchiveCoverage:
    archive: str
    study_count: int
    total_citations: int
    citations_per_study: float  # one decimal place

    def to_dict(self) -> dict:
        return {
            "archive": self.archive,
            "study_count": self.study_count,
            "total_citations": self.total_citations,
            "citations_per_study": self.citations_per_study,
        }


@dataclass
class CoverageReport:
    decade_counts: dict[str, int]  # "1990s", ..., "Unknown"
    archives: list[ArchiveCoverage]

    def to_dict(self) -> dict:
        return {
            "decades": self.decade_counts,
            "archives": [a.to_dict() for a in self.archives],
        }


def coverage_report(
    bibliography: Sequence[BibliographyEntry], catalog: Sequence[CatalogStudy]
) -> CoverageReport:
    """Per-decade publication histogram and per-archive citation ratios.
    A citation is one (entry, linked study) pair; entries without a year
    land in the Unknown bucket."""
    decades: dict[str, int] = {}
    for entry in bibliography:
        bucket = f"{entry.year // 10 * 10}s" if entry.year else "Unknown"
        decades[bucket] = decades.get(bucket, 0) + 1
    decades = dict(sorted(decades.items(), key=lambda kv: (kv[0] == "Unknown", kv[0])))

    archive_of = {study.study_id: study.archive for study in catalog}
    study_counts: dict[str, int] = {}
    for study in catalog:
        study_counts[study.archive] = study_counts.get(study.archive, 0) + 1
    citations: dict[str, int] = {}
    for entry in bibliography:
        for study_id in entry.study_ids:
            archive = archive_of.get(study_id)
            if archive is not None:
                citations[archive] = citations.get(archive, 0) + 1

    archives = []
    for archive in sorted(study_counts):
        n_studies = study_counts[archive]
        n_citations = citations.get(archive, 0)
        ratio = round(n_citations / n_studies, 1) if n_studies else 0.0
        archives.append(ArchiveCoverage(archive, n_studies, n_citations, ratio))
    archives.sort(key=lambda a: (-a.citations_per_study, a.archive))
    return CoverageReport(decade_counts=decades, archives=archives)


# ---------------------------------------------------------------------------
# Similarity-score histogram (for threshold recalibration)


def score_histogram(links: Sequence[LinkResult], bin_width: float = 0.05) -> dict[str, int]:
    bins: dict[str, int] = {}
    for link in links:
        lo = int(link.similarity / bin_width) * bin_width
        label = f"{lo:.2f}"
        bins[label] = bins.get(label, 0) + 1
    return dict(sorted(bins.items()))


# ---------------------------------------------------------------------------
# Plain-text rendering


def render_table(rows: Sequence[Sequence], headers: Sequence[str]) -> str:
    """Aligned plain-text table; right-aligns numeric columns."""
    cells = [[str(c) for c in row] for row in rows]
    widths = [
        max(len(headers[i]), *(len(r[i]) for r in cells)) if cells else len(headers[i])
        for i in range(len(headers))
    ]
    numeric = [
        bool(cells) and all(r[i].replace(".", "", 1).lstrip("-").isdigit() for r in cells)
        for i in range(len(headers))
    ]

    def fmt(row):
        return "  ".join(
            c.rjust(widths[i]) if numeric[i] else c.ljust(widths[i])
            for i, c in enumerate(row)
        ).rstrip()

    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in cells)
    return "\n".join(lines) + "\n"


def render_section_histogram(hist: SectionHistogram) -> str:
    rows = [
        [label.value, n, hist.examples.get(label, "")]
        for label, n in hist.counts.items()
    ]
    return render_table(rows, ["Section", "References", "Example"])


def render_coverage(report: CoverageReport) -> str:
    decade_rows = [[decade, n] for decade, n in report.decade_counts.items()]
    archive_rows = [
        [a.archive, a.study_count, a.total_citations, f"{a.citations_per_study:.1f}"]
        for a in report.archives
    ]
    return (
        render_table(decade_rows, ["Decade", "Publications"])
        + "\n"
        + render_table(
            archive_rows, ["Archive", "Studies", "Citations", "Citations/Study"]
        )
    )


def compose_report(
    links: Sequence[LinkResult],
    documents: Sequence[Document],
    entries: Optional[Sequence[BibliographyEntry]] = None,
    studies: Optional[Sequence[CatalogStudy]] = None,
) -> tuple[dict, str]:
    """Assemble the JSON payload and the rendered text report from one
    pipeline run. Coverage tables require the bibliography and catalog."""
    from .linkage import partition_summary

    summary = partition_summary(links)
    histogram = section_histogram(links, documents)
    payload = {
        "partitions": {
            "references": {p.value: n for p, n in summary.reference_counts.items()},
            "publications": {p.value: n for p, n in summary.publication_counts.items()},
            "review_queue": len(summary.review_queue),
            "acquisitions": len(summary.acquisitions),
        },
        "sections": histogram.to_dict(),
        "coreference": {
            "surface": coreference_stats(links, documents, identity="surface").to_dict(),
            "study": coreference_stats(links, documents, identity="study").to_dict(),
        },
        "score_histogram": score_histogram(links),
    }
    blocks = [render_section_histogram(histogram)]
    if entries is not None and studies is not None:
        coverage = coverage_report(entries, studies)
        payload["coverage"] = coverage.to_dict()
        blocks.append(render_coverage(coverage))
    return payload, "\n\n".join(blocks) + "\n"
