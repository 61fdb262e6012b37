"""Shared factories and fixture paths for the test suite."""

from __future__ import annotations

from pathlib import Path

import pytest

from datarefs.catalog import Access, CatalogStudy, Status, derive_doi
from datarefs.docparse import Sentence
from datarefs.extract import DataReference, Source

FIXTURES = Path(__file__).parent / "fixtures"

# (criterion name, passed) pairs recorded by the acceptance suite
ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}")


def make_study(
    study_id: int,
    name: str,
    variants: tuple[str, ...] = (),
    doi: str | None = "derive",
    archive: str = "ICPSR",
    status: Status = Status.ACTIVE,
    access: Access = Access.PUBLIC,
    self_deposited: bool = False,
) -> CatalogStudy:
    if doi == "derive":
        doi = derive_doi(study_id)
    return CatalogStudy(
        study_id=study_id,
        canonical_name=name,
        name_variants=tuple(variants),
        doi=doi,
        archive=archive,
        status=status,
        access=access,
        self_deposited=self_deposited,
    )


def make_sentence(
    text: str,
    doc_id: str = "doc",
    section_index: int = 0,
    sentence_index: int = 0,
    field: str = "body",
) -> Sentence:
    return Sentence(
        doc_id=doc_id,
        section_index=section_index,
        sentence_index=sentence_index,
        text=text,
        start=0,
        end=len(text),
        field=field,
    )


def make_reference(
    sentence: Sentence,
    start: int,
    end: int,
    source: Source = Source.RULE_DETECTOR,
    confidence: float = 1.0,
) -> DataReference:
    return DataReference(
        sentence=sentence,
        start=start,
        end=end,
        surface=sentence.text[start:end],
        source=source,
        confidence=confidence,
    )


@pytest.fixture
def mini_config(tmp_path):
    """Pipeline config pointing at the bundled fixture corpus."""
    return {
        "catalog": str(FIXTURES / "catalog.jsonl"),
        "corpus": str(FIXTURES / "corpus.jsonl"),
        "bibliography": str(FIXTURES / "bibliography.jsonl"),
        "resolver": str(FIXTURES / "resolver"),
        "out_dir": str(tmp_path / "out"),
        "min_interval": 0.0,
    }
