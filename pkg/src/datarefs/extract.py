"""Candidate extraction, the rule/gazetteer entity detector, external
prediction ingestion, deterministic splits, and span-level metrics.

Candidate extraction grades each sentence substring by likelihood of
being a dataset reference: High for data-use keywords, Medium for
acronyms, Low for runs of capitalized words. The gazetteer detector does
longest-match lookup of catalog names with labeling-guideline span
adjustment (year prefixes kept, trailing generic words trimmed,
parenthesized acronyms kept, every occurrence reported).
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .catalog import CatalogStudy
from .docparse import Document, Sentence
from .jsonl import read_jsonl, write_jsonl

log = logging.getLogger(__name__)


class Level(str, Enum):
    HIGH = "High"
    MEDIUM = "Medium"
    LOW = "Low"

    @property
    def rank(self) -> int:
        return {"High": 0, "Medium": 1, "Low": 2}[self.value]


class Source(str, Enum):
    RULE_DETECTOR = "rule"
    EXTERNAL_MODEL = "external"


class MatchMode(str, Enum):
    EXACT_SPAN = "exact"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class CandidateSpan:
    sentence: Sentence
    start: int
    end: int
    level: Level
    pattern_id: str

    @property
    def surface(self) -> str:
        return self.sentence.text[self.start : self.end]


@dataclass(frozen=True)
class DataReference:
    sentence: Sentence
    start: int
    end: int
    surface: str
    source: Source
    confidence: float
    study_hint: Optional[int] = None  # gazetteer entry's study, when known


@dataclass(frozen=True)
class GoldAnnotation:
    sentence: Sentence
    spans: tuple[tuple[int, int], ...]  # sorted, non-overlapping


@dataclass
class Metrics:
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    f1: float
    mode: MatchMode
    sentence_recall: Optional[float] = None


def sentence_key(sentence: Sentence) -> tuple[str, int, int]:
    return (sentence.doc_id, sentence.section_index, sentence.sentence_index)


# ---------------------------------------------------------------------------
# Three-level candidate extraction


@dataclass(frozen=True)
class ExtractionPattern:
    pattern_id: str
    level: Level
    regex: re.Pattern


@lru_cache(maxsize=None)
def load_patterns(path: Optional[str] = None) -> tuple[ExtractionPattern, ...]:
    source = (
        Path(path)
        if path
        else Path(str(resources.files("datarefs") / "data" / "extract_patterns.json"))
    )
    patterns = []
    for raw in json.loads(source.read_text(encoding="utf-8")):
        flags = re.IGNORECASE if raw.get("ignore_case") else 0
        patterns.append(
            ExtractionPattern(
                pattern_id=raw["id"],
                level=Level(raw["level"]),
                regex=re.compile(raw["pattern"], flags),
            )
        )
    return tuple(patterns)


def extract_candidates(sentence: Sentence) -> list[CandidateSpan]:
    """All pattern matches at all three levels; overlaps across levels are
    kept on purpose, the annotator sees every cue."""
    candidates = []
    for pattern in load_patterns():
        for match in pattern.regex.finditer(sentence.text):
            candidates.append(
                CandidateSpan(
                    sentence=sentence,
                    start=match.start(),
                    end=match.end(),
                    level=pattern.level,
                    pattern_id=pattern.pattern_id,
                )
            )
    candidates.sort(key=lambda c: (c.start, c.end, c.level.rank, c.pattern_id))
    return candidates


def sentence_likelihood(candidates: Sequence[CandidateSpan]) -> Optional[Level]:
    """Best level present, None for an empty candidate list."""
    if not candidates:
        return None
    return min((c.level for c in candidates), key=lambda lv: lv.rank)


# ---------------------------------------------------------------------------
# Gazetteer detector


@dataclass(frozen=True)
class GazetteerEntry:
    text: str
    study_id: int
    kind: str  # "name" | "variant" | "acronym"
    regex: re.Pattern = field(compare=False, hash=False, repr=False, default=None)


_KIND_RANK = {"name": 0, "variant": 1, "acronym": 2}
TRAILING_GENERIC = {"study", "studies", "survey", "surveys", "data", "dataset", "datasets"}
_YEAR_PREFIX = re.compile(r"(?<!\d)(?:1[89]\d{2}|20\d{2})\s+$")
_PAREN_ACRONYM = re.compile(r"^\s*\(\s*[A-Z][A-Z0-9&.\-]+s?\s*\)")


def looks_like_acronym(text: str) -> bool:
    core = text[:-1] if text.endswith("s") and len(text) > 2 else text
    return (
        len(core) >= 2
        and core == core.upper()
        and any(c.isalpha() for c in core)
        and not any(c.isspace() for c in core)
    )


def derive_acronym(name: str) -> Optional[str]:
    """Initial letters of capitalized words ("American National Election
    Survey" -> "ANES"). Off by default in build_gazetteer: short acronyms
    collide with ordinary noun phrases."""
    initials = "".join(w[0] for w in name.split() if w[:1].isupper() and w[1:2].islower())
    return initials if len(initials) >= 3 else None


def _entry_regex(text: str) -> re.Pattern:
    """Case-sensitive on capitals: uppercase letters must match exactly,
    lowercase letters match either case, whitespace is flexible."""
    parts = []
    for c in text:
        if c.isspace():
            parts.append(r"\s+")
        elif c.isalpha() and c.islower():
            parts.append(f"[{c}{c.upper()}]")
        else:
            parts.append(re.escape(c))
    return re.compile(r"(?<![0-9A-Za-z])" + "".join(parts) + r"(?![0-9A-Za-z])")


class Gazetteer:
    def __init__(self, entries: Iterable[GazetteerEntry]):
        # longer entries first so longest-match wins at equal start
        self.entries = sorted(
            entries,
            key=lambda e: (-len(e.text), _KIND_RANK[e.kind], e.study_id, e.text),
        )

    def __len__(self) -> int:
        return len(self.entries)


def build_gazetteer(
    catalog: Iterable[CatalogStudy], derive_acronyms: bool = False
) -> Gazetteer:
    entries = []
    for study in catalog:
        entries.append(_make_entry(study.canonical_name, study.study_id, "name"))
        for variant in study.name_variants:
            kind = "acronym" if looks_like_acronym(variant) else "variant"
            entries.append(_make_entry(variant, study.study_id, kind))
        if derive_acronyms:
            acronym = derive_acronym(study.canonical_name)
            if acronym:
                entries.append(_make_entry(acronym, study.study_id, "acronym"))
    return Gazetteer(entries)


def _make_entry(text: str, study_id: int, kind: str) -> GazetteerEntry:
    return GazetteerEntry(text=text, study_id=study_id, kind=kind, regex=_entry_regex(text))


def detect_rule(
    sentence: Sentence,
    gazetteer: Gazetteer,
    candidates: Sequence[CandidateSpan] = (),
) -> list[DataReference]:
    """Longest-match gazetteer detection with guideline post-processing.

    Every occurrence is reported, a 4-digit year immediately before the
    name joins the span, a parenthesized acronym immediately after stays
    in it, and trailing generic words outside the matched entry are
    trimmed. Output spans never overlap.
    """
    text = sentence.text
    matches: list[tuple[int, int, GazetteerEntry]] = []
    for entry in gazetteer.entries:
        for m in entry.regex.finditer(text):
            matches.append((m.start(), m.end(), entry))
    matches.sort(
        key=lambda t: (t[0], -(t[1] - t[0]), _KIND_RANK[t[2].kind], t[2].study_id)
    )

    references = []
    cursor = 0
    for start, end, entry in matches:
        if start < cursor:
            continue
        entry_end = end
        # (a) absorb an immediately preceding 4-digit year
        year = _YEAR_PREFIX.search(text, 0, start)
        if year and year.start() >= cursor:
            start = year.start()
        # (d) keep a directly following parenthesized acronym in the span
        paren = _PAREN_ACRONYM.match(text[end:])
        if paren:
            end += paren.end()
            entry_end = end
        # (b) trim trailing generic words that are not part of the entry
        while True:
            tail = re.search(r"\s+\S+$", text[start:end])
            if not tail:
                break
            word = tail.group().strip().lower().strip(".,;:")
            if word in TRAILING_GENERIC and start + tail.start() >= entry_end:
                end = start + tail.start()
            else:
                break
        references.append(
            DataReference(
                sentence=sentence,
                start=start,
                end=end,
                surface=text[start:end],
                source=Source.RULE_DETECTOR,
                confidence=0.8 if entry.kind == "acronym" else 1.0,
                study_hint=entry.study_id,
            )
        )
        cursor = end
    return references


# ---------------------------------------------------------------------------
# Reference / gold / prediction records on disk


def reference_to_record(ref: DataReference) -> dict:
    return {
        "doc_id": ref.sentence.doc_id,
        "section_index": ref.sentence.section_index,
        "sentence_index": ref.sentence.sentence_index,
        "start": ref.start,
        "end": ref.end,
        "surface": ref.surface,
        "label": "DATASET",
        "source": ref.source.value,
        "confidence": ref.confidence,
        "study_hint": ref.study_hint,
    }


def sentence_lookup(documents: Iterable[Document]) -> dict[tuple[str, int, int], Sentence]:
    table = {}
    for doc in documents:
        for sentence in doc.iter_sentences():
            table[sentence_key(sentence)] = sentence
    return table


def _resolve(record: dict, table: dict) -> Sentence:
    key = (record["doc_id"], record["section_index"], record["sentence_index"])
    if key not in table:
        raise ValueError(f"unresolvable sentence reference: {key}")
    return table[key]


def load_external_predictions(
    source: str | Path, documents: Iterable[Document]
) -> tuple[list[DataReference], list[dict]]:
    """Model predictions from a JSONL file. Records that do not resolve to
    a corpus sentence, or whose offsets fall outside it, are rejected with
    a reason. Overlapping spans within a sentence are merged, keeping the
    higher-confidence span."""
    table = sentence_lookup(documents)
    refs: list[DataReference] = []
    rejects: list[dict] = []
    for line_no, record in enumerate(read_jsonl(source), start=1):
        try:
            sentence = _resolve(record, table)
            start, end = int(record["start"]), int(record["end"])
            if not (0 <= start < end <= len(sentence.text)):
                raise ValueError(
                    f"span ({start},{end}) out of bounds for sentence of "
                    f"length {len(sentence.text)}"
                )
            refs.append(
                DataReference(
                    sentence=sentence,
                    start=start,
                    end=end,
                    surface=sentence.text[start:end],
                    source=Source.EXTERNAL_MODEL,
                    confidence=float(record.get("confidence", 1.0)),
                )
            )
        except (ValueError, KeyError) as exc:
            rejects.append({"line": line_no, "reason": str(exc)})
            log.warning("prediction rejected (line %d): %s", line_no, exc)
    return merge_overlaps(refs), rejects


def merge_overlaps(refs: Sequence[DataReference]) -> list[DataReference]:
    """Per sentence, keep the higher-confidence span of any overlapping
    pair (ties: earlier, then longer span)."""
    by_sentence: dict[tuple, list[DataReference]] = {}
    for ref in refs:
        by_sentence.setdefault(sentence_key(ref.sentence), []).append(ref)
    merged: list[DataReference] = []
    for key in sorted(by_sentence):
        accepted: list[DataReference] = []
        ordered = sorted(
            by_sentence[key], key=lambda r: (-r.confidence, r.start, -(r.end - r.start))
        )
        for ref in ordered:
            if all(ref.end <= a.start or a.end <= ref.start for a in accepted):
                accepted.append(ref)
        merged.extend(sorted(accepted, key=lambda r: r.start))
    return merged


def gold_to_records(annotation: GoldAnnotation) -> list[dict]:
    """One record per span; a sentence annotated with zero spans (a hard
    negative) becomes a single record with null offsets."""
    base = {
        "doc_id": annotation.sentence.doc_id,
        "section_index": annotation.sentence.section_index,
        "sentence_index": annotation.sentence.sentence_index,
        "label": "DATASET",
    }
    if not annotation.spans:
        return [{**base, "start": None, "end": None}]
    return [{**base, "start": s, "end": e} for s, e in annotation.spans]


def save_gold(path: str | Path, annotations: Iterable[GoldAnnotation]) -> int:
    records = []
    for annotation in annotations:
        records.extend(gold_to_records(annotation))
    return write_jsonl(path, records)


def load_gold(source: str | Path, documents: Iterable[Document]) -> list[GoldAnnotation]:
    """Strict loader: any unresolvable reference, out-of-bounds span, or
    overlap within a sentence raises ValueError."""
    table = sentence_lookup(documents)
    spans_by_key: dict[tuple, set[tuple[int, int]]] = {}
    sentences: dict[tuple, Sentence] = {}
    for record in read_jsonl(source):
        sentence = _resolve(record, table)
        key = sentence_key(sentence)
        sentences[key] = sentence
        spans_by_key.setdefault(key, set())
        if record.get("start") is None:
            continue
        start, end = int(record["start"]), int(record["end"])
        if not (0 <= start < end <= len(sentence.text)):
            raise ValueError(f"gold span ({start},{end}) out of bounds at {key}")
        spans_by_key[key].add((start, end))

    annotations = []
    for key in sorted(spans_by_key):
        spans = tuple(sorted(spans_by_key[key]))
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            if s2 < e1:
                raise ValueError(f"overlapping gold spans at {key}: {spans}")
        annotations.append(GoldAnnotation(sentence=sentences[key], spans=spans))
    return annotations


# ---------------------------------------------------------------------------
# Deterministic split


def _assignment_hash(key: tuple[str, int, int], seed: int) -> str:
    payload = f"{key[0]}|{key[1]}|{key[2]}|{seed}"
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def split_train_eval(
    gold: Sequence[GoldAnnotation], ratio: float, seed: int
) -> tuple[list[GoldAnnotation], list[GoldAnnotation]]:
    """Deterministic, platform-independent split by keyed hash. The train
    side gets round(ratio * n) items; disjoint and exhaustive."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    ordered = sorted(
        gold, key=lambda a: (_assignment_hash(sentence_key(a.sentence), seed),
                             sentence_key(a.sentence))
    )
    k = int(len(ordered) * ratio + 0.5)
    train_keys = {sentence_key(a.sentence) for a in ordered[:k]}
    train = [a for a in gold if sentence_key(a.sentence) in train_keys]
    evaluation = [a for a in gold if sentence_key(a.sentence) not in train_keys]
    return train, evaluation


# ---------------------------------------------------------------------------
# Span-level evaluation


def evaluate(
    predictions: Sequence[DataReference],
    gold: Sequence[GoldAnnotation],
    mode: MatchMode = MatchMode.EXACT_SPAN,
) -> Metrics:
    """Span-level precision/recall/F1 plus sentence-level recall.

    Exact mode counts a prediction as correct only when its offsets equal
    a gold span; overlap mode accepts one character of overlap, matched
    greedily one-to-one by position. With no predictions and no gold
    spans all scores are 1.0; with gold but no predictions, all are 0.0.
    """
    gold_by_key = {sentence_key(a.sentence): list(a.spans) for a in gold}
    pred_by_key: dict[tuple, list[tuple[int, int]]] = {}
    for ref in predictions:
        key = sentence_key(ref.sentence)
        if key not in gold_by_key:
            raise ValueError(f"prediction references sentence outside gold universe: {key}")
        pred_by_key.setdefault(key, []).append((ref.start, ref.end))

    tp = fp = fn = 0
    for key, gold_spans in gold_by_key.items():
        pred_spans = sorted(pred_by_key.get(key, []))
        if mode is MatchMode.EXACT_SPAN:
            matched = set(pred_spans) & set(gold_spans)
            tp += len(matched)
            fp += len(pred_spans) - len(matched)
            fn += len(gold_spans) - len(matched)
        else:
            unmatched = sorted(gold_spans)
            hits = 0
            for p_start, p_end in pred_spans:
                for i, (g_start, g_end) in enumerate(unmatched):
                    if p_start < g_end and g_start < p_end:
                        unmatched.pop(i)
                        hits += 1
                        break
            tp += hits
            fp += len(pred_spans) - hits
            fn += len(unmatched)

    pred_total = tp + fp
    gold_total = tp + fn
    if pred_total == 0:
        precision = 1.0 if gold_total == 0 else 0.0
    else:
        precision = tp / pred_total
    if gold_total == 0:
        recall = 1.0 if pred_total == 0 else 0.0
    else:
        recall = tp / gold_total
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0

    bearing = [key for key, spans in gold_by_key.items() if spans]
    sentence_recall = (
        sum(1 for key in bearing if pred_by_key.get(key)) / len(bearing)
        if bearing
        else None
    )
    return Metrics(
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        precision=precision,
        recall=recall,
        f1=f1,
        mode=mode,
        sentence_recall=sentence_recall,
    )


def evaluate_files(
    gold_path: str | Path, pred_path: str | Path, mode: MatchMode
) -> Metrics:
    """File-level evaluation keyed purely on sentence references, for use
    when the parsed corpus is not at hand. Offsets are taken as stored."""
    sentences: dict[tuple, Sentence] = {}

    def pseudo_sentence(record: dict) -> Sentence:
        key = (record["doc_id"], record["section_index"], record["sentence_index"])
        if key not in sentences:
            sentences[key] = Sentence(
                doc_id=key[0], section_index=key[1], sentence_index=key[2],
                text="", start=0, end=0,
            )
        return sentences[key]

    gold_spans: dict[tuple, set[tuple[int, int]]] = {}
    for record in read_jsonl(gold_path):
        sentence = pseudo_sentence(record)
        gold_spans.setdefault(sentence_key(sentence), set())
        if record.get("start") is not None:
            gold_spans[sentence_key(sentence)].add((record["start"], record["end"]))
    gold = [
        GoldAnnotation(sentence=sentences[key], spans=tuple(sorted(spans)))
        for key, spans in sorted(gold_spans.items())
    ]

    predictions = []
    for record in read_jsonl(pred_path):
        sentence = pseudo_sentence(record)
        if sentence_key(sentence) not in gold_spans:
            continue  # out-of-universe predictions are not scoreable here
        predictions.append(
            DataReference(
                sentence=sentence,
                start=record["start"],
                end=record["end"],
                surface=record.get("surface", ""),
                source=Source(record.get("source", "external")),
                confidence=float(record.get("confidence", 1.0)),
            )
        )
    return evaluate(predictions, gold, mode)
