"""Data catalog: load and validate study records, filter by eligibility,
and expand each study into the exact search queries used for retrieval.

A study is the catalog's unit of data; citations accrue at the study
level. Each eligible study yields one query per name (canonical plus
variants), one DOI query when a DOI is registered, and one archival
study-number query ("ICPSR <n>").
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

from .jsonl import read_jsonl

log = logging.getLogger(__name__)

DOI_PREFIX = "10.3886/ICPSR"
STUDY_NUMBER_LABEL = "ICPSR"


class Status(str, Enum):
    ACTIVE = "active"
    DEACCESSIONED = "deaccessioned"


class Access(str, Enum):
    PUBLIC = "public"
    RESTRICTED = "restricted"


class QueryKind(str, Enum):
    STUDY_NAME = "study_name"
    STUDY_DOI = "study_doi"
    STUDY_NUMBER = "study_number"


@dataclass(frozen=True)
class CatalogStudy:
    study_id: int
    canonical_name: str
    name_variants: tuple[str, ...] = ()
    doi: Optional[str] = None
    archive: str = ""
    status: Status = Status.ACTIVE
    access: Access = Access.PUBLIC
    self_deposited: bool = False

    def names(self) -> tuple[str, ...]:
        """Canonical name first, then variants in catalog order."""
        return (self.canonical_name,) + self.name_variants


@dataclass(frozen=True)
class SearchQuery:
    study_id: int
    kind: QueryKind
    phrase: str


@dataclass
class EligibilityPolicy:
    """Defaults mirror archive practice: drop author self-deposits, keep
    restricted-use and deaccessioned studies."""

    exclude_self_deposited: bool = True
    include_restricted: bool = True
    include_deaccessioned: bool = True


def derive_doi(study_id: int) -> str:
    """Registered DOI for a study number: suffix zero-padded to 5 digits.
    Ids with more than 5 digits are not padded further."""
    return f"{DOI_PREFIX}{study_id:05d}"


def doi_to_study_id(doi: str) -> Optional[int]:
    """Inverse of derive_doi; None when the DOI is not a study DOI."""
    if not doi.startswith(DOI_PREFIX):
        return None
    suffix = doi[len(DOI_PREFIX):]
    if not suffix.isdigit():
        return None
    return int(suffix)


def validate_study(raw: dict) -> CatalogStudy:
    """Build a CatalogStudy from a raw record, raising ValueError with a
    human-readable reason on any invariant violation."""
    study_id = raw.get("study_id")
    if not isinstance(study_id, int) or isinstance(study_id, bool) or study_id <= 0:
        raise ValueError("study_id must be a positive integer")

    canonical = str(raw.get("canonical_name") or "").strip()
    if not canonical:
        raise ValueError("empty name")

    variants = []
    for variant in raw.get("name_variants") or []:
        variant = str(variant).strip()
        if not variant:
            raise ValueError("empty name variant")
        if variant == canonical:
            raise ValueError(f"variant duplicates canonical name: {variant!r}")
        variants.append(variant)

    doi = raw.get("doi")
    if doi is not None:
        doi = str(doi).strip()
        if doi != derive_doi(study_id):
            raise ValueError(f"doi {doi!r} does not match study number {study_id}")

    try:
        status = Status(str(raw.get("status", "active")).lower())
        access = Access(str(raw.get("access", "public")).lower())
    except ValueError as exc:
        raise ValueError(str(exc)) from None

    return CatalogStudy(
        study_id=study_id,
        canonical_name=canonical,
        name_variants=tuple(variants),
        doi=doi,
        archive=str(raw.get("archive") or ""),
        status=status,
        access=access,
        self_deposited=bool(raw.get("self_deposited", False)),
    )


def load_catalog(source: str | Path) -> tuple[list[CatalogStudy], list[dict]]:
    """Load a JSONL catalog file.

    Returns (studies, rejects); each reject is {"line", "study_id", "reason"}.
    An unreadable source raises; a bad record only rejects that record.
    """
    studies: list[CatalogStudy] = []
    rejects: list[dict] = []
    seen_ids: set[int] = set()
    for line_no, raw in enumerate(read_jsonl(source), start=1):
        try:
            study = validate_study(raw)
            if study.study_id in seen_ids:
                raise ValueError(f"duplicate study_id {study.study_id}")
            seen_ids.add(study.study_id)
            studies.append(study)
        except ValueError as exc:
            rejects.append(
                {"line": line_no, "study_id": raw.get("study_id"), "reason": str(exc)}
            )
            log.warning("catalog record rejected (line %d): %s", line_no, exc)
    return studies, rejects


def filter_eligible(
    catalog: Iterable[CatalogStudy], policy: EligibilityPolicy | None = None
) -> list[CatalogStudy]:
    """Apply the eligibility policy. Idempotent by construction."""
    policy = policy or EligibilityPolicy()
    kept = []
    for study in catalog:
        if policy.exclude_self_deposited and study.self_deposited:
            continue
        if not policy.include_restricted and study.access is Access.RESTRICTED:
            continue
        if not policy.include_deaccessioned and study.status is Status.DEACCESSIONED:
            continue
        kept.append(study)
    return kept


def expand_queries(study: CatalogStudy) -> list[SearchQuery]:
    """One name query per name, one DOI query when present, one number query.

    Order is deterministic: names in catalog order, then DOI, then number.
    The number phrase is unpadded ("ICPSR 6635"), unlike the DOI suffix.
    """
    queries = [
        SearchQuery(study.study_id, QueryKind.STUDY_NAME, name) for name in study.names()
    ]
    if study.doi:
        queries.append(SearchQuery(study.study_id, QueryKind.STUDY_DOI, study.doi))
    queries.append(
        SearchQuery(
            study.study_id,
            QueryKind.STUDY_NUMBER,
            f"{STUDY_NUMBER_LABEL} {study.study_id}",
        )
    )
    return queries


def expand_catalog_queries(catalog: Iterable[CatalogStudy]) -> list[SearchQuery]:
    queries: list[SearchQuery] = []
    for study in catalog:
        queries.extend(expand_queries(study))
    return queries
