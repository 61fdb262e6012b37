"""Human-in-the-loop review: a prioritized queue of candidate references,
an append-only verdict log, and exports that close the loop, accepted
items become bibliography entries, every verdict becomes gold training
data.

State is event-sourced: the log file is the single source of truth and
replaying it from empty reconstructs the service exactly. Verdicts for
the same item supersede each other, last one wins.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .docparse import Document, Sentence
from .extract import CandidateSpan, GoldAnnotation, Level, sentence_key, sentence_likelihood
from .jsonl import dumps, read_jsonl
from .linkage import LinkResult, Partition

log = logging.getLogger(__name__)


class VerdictIn(BaseModel):
    """POST /verdicts request body."""

    item_id: str
    decision: str
    adjusted: Optional[list[int]] = None
    reviewer: str = "anonymous"

_PARTITION_RANK = {
    Partition.CATALOG_DATASET: 0,
    Partition.EXTERNAL_DATASET: 1,
    Partition.NON_DATASET: 2,
}


class Decision(str, Enum):
    ACCEPT_USE = "accept_use"
    ACCEPT_MENTION = "accept_mention"
    REJECT = "reject"
    ADJUST_SPAN = "adjust_span"


ACCEPTING = {Decision.ACCEPT_USE, Decision.ACCEPT_MENTION, Decision.ADJUST_SPAN}


@dataclass(frozen=True)
class Verdict:
    item_id: str
    decision: Decision
    adjusted: Optional[tuple[int, int]]  # present iff decision is ADJUST_SPAN
    reviewer: str
    timestamp: str  # UTC ISO-8601

    def to_record(self) -> dict:
        return {
            "item_id": self.item_id,
            "decision": self.decision.value,
            "adjusted": list(self.adjusted) if self.adjusted else None,
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
        }


def compute_item_id(doc_id: str, section_index: int, sentence_index: int,
                    start: int, end: int) -> str:
    payload = f"{doc_id}|{section_index}|{sentence_index}|{start}|{end}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class ReviewItem:
    item_id: str
    link: LinkResult
    sentence: Sentence
    section_label: str
    candidates: tuple[CandidateSpan, ...] = ()
    priority: tuple = field(default=())

    @property
    def level(self) -> Optional[Level]:
        return sentence_likelihood(self.candidates)

    def to_dict(self) -> dict:
        ref = self.link.reference
        return {
            "item_id": self.item_id,
            "doc_id": self.sentence.doc_id,
            "section_index": self.sentence.section_index,
            "sentence_index": self.sentence.sentence_index,
            "start": ref.start,
            "end": ref.end,
            "surface": ref.surface,
            "sentence_text": self.sentence.text,
            "section_label": self.section_label,
            "partition": self.link.partition.value,
            "study_id": self.link.best_study,
            "similarity": self.link.similarity,
            "centered_score": self.link.centered_score,
            "level": self.level.value if self.level else None,
            "candidates": [
                {
                    "level": c.level.value,
                    "pattern_id": c.pattern_id,
                    "start": c.start,
                    "end": c.end,
                    "surface": c.surface,
                }
                for c in self.candidates
            ],
        }


def build_queue(
    links: Sequence[LinkResult],
    candidates_by_sentence: dict[tuple[str, int, int], Sequence[CandidateSpan]]
    | None = None,
    section_labels: dict[tuple[str, int], str] | None = None,
) -> list[ReviewItem]:
    """Order: catalog matches first, stronger candidate levels first, then
    similarity descending, then document order. The priority key is the
    explicit sort tuple, totally ordered."""
    candidates_by_sentence = candidates_by_sentence or {}
    section_labels = section_labels or {}
    items = []
    for link in links:
        ref = link.reference
        sentence = ref.sentence
        key = sentence_key(sentence)
        candidates = tuple(candidates_by_sentence.get(key, ()))
        level = sentence_likelihood(candidates)
        priority = (
            _PARTITION_RANK[link.partition],
            level.rank if level else 3,
            -link.similarity,
            sentence.doc_id,
            sentence.section_index,
            sentence.sentence_index,
            ref.start,
        )
        items.append(
            ReviewItem(
                item_id=compute_item_id(
                    sentence.doc_id, sentence.section_index,
                    sentence.sentence_index, ref.start, ref.end,
                ),
                link=link,
                sentence=sentence,
                section_label=section_labels.get(
                    (sentence.doc_id, sentence.section_index), "Other"
                ),
                candidates=candidates,
                priority=priority,
            )
        )
    items.sort(key=lambda item: item.priority)
    return items


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ReviewState:
    """Queue plus verdict log. Appends go through one writer; reads see a
    snapshot derived from a log prefix."""

    def __init__(
        self,
        items: Sequence[ReviewItem],
        log_path: str | Path,
        clock: Callable[[], str] = _utc_now,
    ):
        self.items: dict[str, ReviewItem] = {}
        self.ordered: list[ReviewItem] = []
        for item in items:
            if item.item_id not in self.items:  # identical span -> same item
                self.items[item.item_id] = item
                self.ordered.append(item)
        self.log_path = Path(log_path)
        self.clock = clock
        self.verdicts: dict[str, Verdict] = {}
        self.log: list[Verdict] = []
        if self.log_path.exists():
            for record in read_jsonl(self.log_path):
                self._apply(self._verdict_from_record(record))

    @staticmethod
    def _verdict_from_record(record: dict) -> Verdict:
        adjusted = record.get("adjusted")
        return Verdict(
            item_id=record["item_id"],
            decision=Decision(record["decision"]),
            adjusted=tuple(adjusted) if adjusted else None,
            reviewer=record.get("reviewer", ""),
            timestamp=record.get("timestamp", ""),
        )

    def _apply(self, verdict: Verdict) -> None:
        if verdict.item_id not in self.items:
            log.warning("verdict for unknown item %s kept but inert", verdict.item_id)
        self.log.append(verdict)
        self.verdicts[verdict.item_id] = verdict

    def queue(self, limit: Optional[int] = None) -> list[ReviewItem]:
        pending = [i for i in self.ordered if i.item_id not in self.verdicts]
        return pending[:limit] if limit is not None else pending

    def get_item(self, item_id: str) -> Optional[ReviewItem]:
        return self.items.get(item_id)

    def submit(
        self,
        item_id: str,
        decision: Decision,
        adjusted: Optional[tuple[int, int]] = None,
        reviewer: str = "",
    ) -> Verdict:
        """Validate, append to the log, update derived state. Raises
        KeyError for an unknown item and ValueError for a bad span."""
        item = self.items.get(item_id)
        if item is None:
            raise KeyError(f"unknown item_id: {item_id}")
        if decision is Decision.ADJUST_SPAN:
            if adjusted is None:
                raise ValueError("adjust_span requires an adjusted (start, end)")
            start, end = adjusted
            if not (0 <= start < end <= len(item.sentence.text)):
                raise ValueError(
                    f"adjusted span ({start},{end}) out of bounds for sentence "
                    f"of length {len(item.sentence.text)}"
                )
        elif adjusted is not None:
            raise ValueError("adjusted span only valid with adjust_span")
        verdict = Verdict(
            item_id=item_id,
            decision=decision,
            adjusted=tuple(adjusted) if adjusted else None,
            reviewer=reviewer,
            timestamp=self.clock(),
        )
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(dumps(verdict.to_record()) + "\n")
        self._apply(verdict)
        return verdict

    # -- exports ------------------------------------------------------------

    def final_verdicts(self) -> dict[str, Verdict]:
        return dict(self.verdicts)

    def export_bibliography(self) -> dict:
        """Accepted-use items grouped into one entry per (document, study)
        pair with full provenance; accepted mentions listed separately."""
        entries: dict[tuple[str, int], dict] = {}
        mentions = []
        for item_id, verdict in sorted(self.verdicts.items()):
            item = self.items.get(item_id)
            if item is None:
                continue
            if verdict.decision is Decision.ACCEPT_MENTION:
                mentions.append(
                    {
                        "doc_id": item.sentence.doc_id,
                        "study_id": item.link.best_study,
                        "surface": item.link.reference.surface,
                        "item_id": item_id,
                    }
                )
                continue
            if verdict.decision not in (Decision.ACCEPT_USE, Decision.ADJUST_SPAN):
                continue
            if item.link.best_study is None:
                continue  # no catalog study to link the document to
            pair = (item.sentence.doc_id, item.link.best_study)
            entry = entries.setdefault(
                pair, {"doc_id": pair[0], "study_id": pair[1], "provenance": []}
            )
            entry["provenance"].append(
                {
                    "item_id": item_id,
                    "reviewer": verdict.reviewer,
                    "timestamp": verdict.timestamp,
                }
            )
        for entry in entries.values():
            entry["provenance"].sort(key=lambda p: p["item_id"])
        return {
            "entries": [entries[k] for k in sorted(entries)],
            "mentions": mentions,
        }

    def export_training(self) -> list[GoldAnnotation]:
        """Every final verdict becomes gold: accepted spans (adjusted when
        the reviewer corrected them) are positives, rejected items leave
        hard-negative sentences with no span."""
        spans_by_key: dict[tuple, set[tuple[int, int]]] = {}
        sentences: dict[tuple, Sentence] = {}
        for item_id, verdict in self.verdicts.items():
            item = self.items.get(item_id)
            if item is None:
                continue
            key = sentence_key(item.sentence)
            sentences[key] = item.sentence
            spans_by_key.setdefault(key, set())
            if verdict.decision in ACCEPTING:
                span = verdict.adjusted or (
                    item.link.reference.start,
                    item.link.reference.end,
                )
                spans_by_key[key].add(span)
        annotations = []
        for key in sorted(spans_by_key):
            spans = _drop_overlaps(sorted(spans_by_key[key]))
            annotations.append(
                GoldAnnotation(sentence=sentences[key], spans=tuple(spans))
            )
        return annotations


def _drop_overlaps(spans: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Adjusted spans can collide with accepted ones; keep the earliest."""
    kept: list[tuple[int, int]] = []
    for span in spans:
        if not kept or span[0] >= kept[-1][1]:
            kept.append(span)
    return kept


# ---------------------------------------------------------------------------
# Wiring from pipeline output files


def state_from_files(
    links_path: str | Path,
    docs_path: str | Path,
    log_path: str | Path,
    spans_path: Optional[str | Path] = None,
) -> ReviewState:
    from .docparse import document_from_record
    from .extract import DataReference, Source
    from .linkage import LinkResult as LR

    documents = [document_from_record(r) for r in read_jsonl(docs_path)]
    table = {}
    section_labels = {}
    for doc in documents:
        for k, section in enumerate(doc.sections):
            section_labels[(doc.doc_id, k)] = section.label.value
        for sentence in doc.iter_sentences():
            table[sentence_key(sentence)] = sentence

    candidates_by_sentence: dict[tuple, list[CandidateSpan]] = {}
    if spans_path and Path(spans_path).exists():
        for record in read_jsonl(spans_path):
            key = (record["doc_id"], record["section_index"], record["sentence_index"])
            sentence = table.get(key)
            if sentence is None:
                continue
            candidates_by_sentence.setdefault(key, []).append(
                CandidateSpan(
                    sentence=sentence,
                    start=record["start"],
                    end=record["end"],
                    level=Level(record["level"]),
                    pattern_id=record["pattern_id"],
                )
            )

    links = []
    for record in read_jsonl(links_path):
        key = (record["doc_id"], record["section_index"], record["sentence_index"])
        sentence = table.get(key)
        if sentence is None:
            log.warning("link for unknown sentence %s skipped", key)
            continue
        reference = DataReference(
            sentence=sentence,
            start=record["start"],
            end=record["end"],
            surface=record["surface"],
            source=Source(record.get("source", "rule")),
            confidence=float(record.get("confidence", 1.0)),
        )
        links.append(
            LR(
                reference=reference,
                best_study=record.get("study_id"),
                similarity=record["similarity"],
                centered_score=record["centered_score"],
                partition=Partition(record["partition"]),
            )
        )

    items = build_queue(links, candidates_by_sentence, section_labels)
    return ReviewState(items, log_path)


# ---------------------------------------------------------------------------
# HTTP app


def create_app(state: ReviewState, static_dir: Optional[Path] = None) -> FastAPI:
    """Build the service app. `static_dir`, when given, is mounted at /ui
    so a built web client can be served from the same process."""
    app = FastAPI(title="datarefs review service")
    app.state.review = state

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "items": len(state.items), "verdicts": len(state.verdicts)}

    @app.get("/queue")
    def queue(limit: int = 20):
        pending = state.queue()
        return {
            "items": [item.to_dict() for item in pending[:limit]],
            "remaining": len(pending),
        }

    @app.get("/items/{item_id}")
    def get_item(item_id: str):
        item = state.get_item(item_id)
        if item is None:
            raise HTTPException(status_code=404, detail=f"unknown item_id: {item_id}")
        return item.to_dict()

    @app.post("/verdicts", status_code=201)
    def post_verdict(body: VerdictIn):
        try:
            decision = Decision(body.decision)
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown decision: {body.decision}")
        adjusted = tuple(body.adjusted) if body.adjusted else None
        if adjusted is not None and len(adjusted) != 2:
            raise HTTPException(status_code=422, detail="adjusted must be [start, end]")
        try:
            verdict = state.submit(
                body.item_id, decision, adjusted=adjusted, reviewer=body.reviewer
            )
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"acknowledged": verdict.to_record(), "remaining": len(state.queue())}

    @app.get("/exports/bibliography")
    def bibliography():
        return state.export_bibliography()

    @app.get("/exports/training")
    def training():
        from .extract import gold_to_records

        records = []
        for annotation in state.export_training():
            records.extend(gold_to_records(annotation))
        return {"records": records}

    return app
