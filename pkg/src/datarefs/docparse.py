"""Parse TEI-style XML or plaintext into structured documents, normalize
section headings, and segment text into offset-stable sentences.

The TEI subset covers what scholarly PDF converters emit: divisions with
headings and paragraphs, footnote-style notes, and figure/table captions.
Anything else degrades gracefully to body text. Sentence segmentation is
rule-based and abbreviation-aware; the abbreviation list and the section
synonym table ship as editable data files.
"""

from __future__ import annotations

import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

log = logging.getLogger(__name__)


class SectionLabel(str, Enum):
    INTRODUCTION = "Introduction"
    DATA = "Data"
    METHODS = "Methods"
    RESULTS = "Results"
    DISCUSSION = "Discussion"
    CONCLUSIONS = "Conclusions"
    ACKNOWLEDGEMENTS = "Acknowledgements"
    REFERENCES = "References"
    ABSTRACT = "Abstract"
    OTHER = "Other"


@dataclass
class Sentence:
    doc_id: str
    section_index: int
    sentence_index: int
    text: str
    start: int  # character offset into the source field, end exclusive
    end: int
    field: str = "body"  # "body", "footnote:<i>", or "caption:<i>"


@dataclass
class Section:
    raw_heading: str
    label: SectionLabel
    body: str
    footnotes: list[str] = field(default_factory=list)
    captions: list[str] = field(default_factory=list)
    sentences: list[Sentence] = field(default_factory=list)


@dataclass
class Document:
    doc_id: str
    title: Optional[str] = None
    doi: Optional[str] = None
    year: Optional[int] = None
    sections: list[Section] = field(default_factory=list)

    def iter_sentences(self) -> Iterable[Sentence]:
        for section in self.sections:
            yield from section.sentences

    def full_text(self) -> str:
        """Every text field of every section, for indexing."""
        parts = [self.title]
        for section in self.sections:
            parts.append(section.raw_heading)
            parts.append(section.body)
            parts.extend(section.footnotes)
            parts.extend(section.captions)
        return "\n".join(p for p in parts if p)


# ---------------------------------------------------------------------------
# Section heading normalization


def _data_path(name: str) -> Path:
    return Path(str(resources.files("datarefs") / "data" / name))


@lru_cache(maxsize=None)
def load_section_synonyms(path: Optional[str] = None) -> dict[str, SectionLabel]:
    table: dict[str, SectionLabel] = {}
    source = Path(path) if path else _data_path("section_synonyms.tsv")
    for line in source.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        heading, label = line.split("\t")
        table[heading.strip().lower()] = SectionLabel(label.strip())
    return table


_HEADING_NUMBER = re.compile(r"^\s*(?:[0-9]+(?:\.[0-9]+)*\.?|[IVXLCDM]+\.)\s*")


def normalize_section(raw_heading: str) -> SectionLabel:
    """Case-insensitive synonym-table lookup after stripping numbering
    prefixes ("3.", "4.2", "IV.") and trailing punctuation."""
    cleaned = _HEADING_NUMBER.sub("", raw_heading)
    cleaned = re.sub(r"\s+", " ", cleaned).strip().strip(":.").strip().lower()
    return load_section_synonyms().get(cleaned, SectionLabel.OTHER)


# ---------------------------------------------------------------------------
# Sentence segmentation


@lru_cache(maxsize=None)
def load_abbreviations(path: Optional[str] = None) -> tuple[str, ...]:
    source = Path(path) if path else _data_path("sbd_abbreviations.txt")
    abbrevs = []
    for line in source.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            abbrevs.append(line.lower())
    return tuple(abbrevs)


# Terminator plus any closing quotes/brackets, with whitespace following.
_BOUNDARY = re.compile(r"[.?!][\"')\]”’»]*(?=\s)")
# Character that may open the next sentence: capital, digit, or quote.
_TRIGGER = re.compile(r"[A-Z0-9\"'“”‘’]")
_INITIAL = re.compile(r"(?:^|[^A-Za-z])[A-Z]\.$")
# How far back an unclosed paren still suppresses a boundary.
_PAREN_WINDOW = 300


def _ends_with_abbreviation(prefix: str) -> bool:
    lowered = prefix.lower()
    for abbr in load_abbreviations():
        if not lowered.endswith(abbr):
            continue
        boundary = len(lowered) - len(abbr)
        if boundary == 0 or not lowered[boundary - 1].isalpha():
            return True
    return False


def _inside_parens(text: str, pos: int) -> bool:
    window_start = max(0, pos - _PAREN_WINDOW)
    stack: list[int] = []
    for i in range(window_start, pos):
        c = text[i]
        if c in "([":
            stack.append(i)
        elif c in ")]" and stack:
            stack.pop()
    return bool(stack)


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    """Split points for one text field; spans are trimmed of surrounding
    whitespace and cover all non-whitespace characters."""
    boundaries: list[tuple[int, int]] = []  # (end of sentence, start of next)
    for match in _BOUNDARY.finditer(text):
        end = match.end()
        nxt = end
        while nxt < len(text) and text[nxt].isspace():
            nxt += 1
        if nxt >= len(text) or not _TRIGGER.match(text[nxt]):
            continue
        if text[match.start()] == ".":
            prefix = text[: match.start() + 1]
            if _ends_with_abbreviation(prefix) or _INITIAL.search(prefix):
                continue
        if _inside_parens(text, match.start()):
            continue
        boundaries.append((end, nxt))

    spans: list[tuple[int, int]] = []
    start = 0
    for end, nxt in boundaries:
        spans.append((start, end))
        start = nxt
    spans.append((start, len(text)))

    trimmed = []
    for lo, hi in spans:
        while lo < hi and text[lo].isspace():
            lo += 1
        while hi > lo and text[hi - 1].isspace():
            hi -= 1
        if lo < hi:
            trimmed.append((lo, hi))
    return trimmed


def segment_text(
    text: str, doc_id: str, section_index: int, field_name: str, first_index: int
) -> list[Sentence]:
    return [
        Sentence(
            doc_id=doc_id,
            section_index=section_index,
            sentence_index=first_index + k,
            text=text[lo:hi],
            start=lo,
            end=hi,
            field=field_name,
        )
        for k, (lo, hi) in enumerate(_sentence_spans(text))
    ]


def segment_section(section: Section, doc_id: str, section_index: int) -> list[Sentence]:
    """Segment body, then footnotes, then captions; sentence indices run
    continuously across fields, offsets are relative to each field."""
    sentences = segment_text(section.body, doc_id, section_index, "body", 0)
    for i, note in enumerate(section.footnotes):
        sentences.extend(
            segment_text(note, doc_id, section_index, f"footnote:{i}", len(sentences))
        )
    for i, caption in enumerate(section.captions):
        sentences.extend(
            segment_text(caption, doc_id, section_index, f"caption:{i}", len(sentences))
        )
    return sentences


def segment_document(doc: Document) -> Document:
    for index, section in enumerate(doc.sections):
        section.sentences = segment_section(section, doc.doc_id, index)
    return doc


# ---------------------------------------------------------------------------
# TEI and plaintext parsing


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _text_of(elem: ET.Element) -> str:
    return re.sub(r"\s+", " ", " ".join(elem.itertext())).strip()


def parse_tei(source: str, doc_id: str, doi: Optional[str] = None) -> Document:
    """Parse a TEI document. Malformed XML raises ET.ParseError with the
    offending location; unknown elements are kept as body text."""
    root = ET.fromstring(source)

    title: Optional[str] = None
    year: Optional[int] = None
    found_doi = doi
    body_elem: Optional[ET.Element] = None
    abstract_text = ""

    for elem in root.iter():
        tag = _local(elem.tag)
        if tag == "title" and title is None:
            title = _text_of(elem) or None
        elif tag == "idno" and elem.get("type", "").upper() == "DOI" and not found_doi:
            found_doi = _text_of(elem) or None
        elif tag == "date" and year is None:
            when = elem.get("when", "")
            if len(when) >= 4 and when[:4].isdigit():
                year = int(when[:4])
        elif tag == "abstract" and not abstract_text:
            abstract_text = _text_of(elem)
        elif tag == "body" and body_elem is None:
            body_elem = elem

    sections: list[Section] = []
    if abstract_text:
        sections.append(
            Section("Abstract", SectionLabel.ABSTRACT, abstract_text)
        )

    if body_elem is not None:
        divisions = [child for child in body_elem if _local(child.tag) == "div"]
        if divisions:
            stray: list[ET.Element] = [
                child for child in body_elem if _local(child.tag) != "div"
            ]
            for div in divisions:
                sections.append(_parse_division(div))
            # figures/notes that sit outside any division attach to the last
            # section so their text stays searchable
            if stray and sections:
                _absorb_children(sections[-1], stray)
        else:
            text = _text_of(body_elem)
            sections.append(Section("", SectionLabel.OTHER, text))
    elif not sections:
        # degenerate input: no body at all
        sections.append(Section("", SectionLabel.OTHER, _text_of(root)))

    doc = Document(doc_id=doc_id, title=title, doi=found_doi, year=year, sections=sections)
    return segment_document(doc)


def _parse_division(div: ET.Element) -> Section:
    heading = ""
    paragraphs: list[str] = []
    footnotes: list[str] = []
    captions: list[str] = []
    for child in div:
        tag = _local(child.tag)
        if tag == "head" and not heading:
            heading = _text_of(child)
        elif tag == "p":
            paragraphs.append(_text_of(child))
        elif tag == "note":
            footnotes.append(_text_of(child))
        elif tag == "figure":
            captions.append(_figure_caption(child))
        else:
            log.warning("unknown TEI element <%s>; keeping its text as body", tag)
            paragraphs.append(_text_of(child))
    body = "\n".join(p for p in paragraphs if p)
    section = Section(heading, normalize_section(heading), body)
    section.footnotes = [n for n in footnotes if n]
    section.captions = [c for c in captions if c]
    return section


def _figure_caption(figure: ET.Element) -> str:
    parts = []
    for child in figure:
        if _local(child.tag) in ("head", "figDesc"):
            parts.append(_text_of(child))
    return " ".join(p for p in parts if p) or _text_of(figure)


def _absorb_children(section: Section, stray: list[ET.Element]) -> None:
    for child in stray:
        tag = _local(child.tag)
        if tag == "figure":
            caption = _figure_caption(child)
            if caption:
                section.captions.append(caption)
        elif tag == "note":
            note = _text_of(child)
            if note:
                section.footnotes.append(note)
        else:
            text = _text_of(child)
            if text:
                section.body = f"{section.body}\n{text}" if section.body else text


def parse_plaintext(source: str, doc_id: str, doi: Optional[str] = None) -> Document:
    """Whole input becomes a single Other section, preserved byte-for-byte."""
    doc = Document(
        doc_id=doc_id,
        doi=doi,
        sections=[Section("", SectionLabel.OTHER, source)],
    )
    return segment_document(doc)


# ---------------------------------------------------------------------------
# Structured-document records (the docs.jsonl line format)


def document_to_record(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "title": doc.title,
        "doi": doc.doi,
        "year": doc.year,
        "sections": [
            {
                "raw_heading": s.raw_heading,
                "label": s.label.value,
                "body": s.body,
                "footnotes": list(s.footnotes),
                "captions": list(s.captions),
                "sentences": [
                    {
                        "sentence_index": t.sentence_index,
                        "field": t.field,
                        "text": t.text,
                        "start": t.start,
                        "end": t.end,
                    }
                    for t in s.sentences
                ],
            }
            for s in doc.sections
        ],
    }


def document_from_record(record: dict) -> Document:
    doc = Document(
        doc_id=record["doc_id"],
        title=record.get("title"),
        doi=record.get("doi"),
        year=record.get("year"),
    )
    for index, s in enumerate(record["sections"]):
        section = Section(
            raw_heading=s["raw_heading"],
            label=SectionLabel(s["label"]),
            body=s["body"],
            footnotes=list(s.get("footnotes", [])),
            captions=list(s.get("captions", [])),
        )
        section.sentences = [
            Sentence(
                doc_id=doc.doc_id,
                section_index=index,
                sentence_index=t["sentence_index"],
                text=t["text"],
                start=t["start"],
                end=t["end"],
                field=t.get("field", "body"),
            )
            for t in s.get("sentences", [])
        ]
        doc.sections.append(section)
    return doc
