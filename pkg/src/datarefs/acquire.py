"""Resolve candidate-document DOIs to full text via content negotiation.

Two resolvers share one interface: a live HTTP resolver with a polite
minimum inter-request delay, and a fixture resolver backed by a
directory that maps sanitized DOIs to payload files. Fixture mode is
fully deterministic, which the pipeline's byte-identical rerun guarantee
depends on.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Protocol

log = logging.getLogger(__name__)

ACCEPT_HEADER = "application/tei+xml, text/plain;q=0.8"
DEFAULT_MIN_INTERVAL = 1.0  # seconds between live requests


class Outcome(str, Enum):
    FETCHED_TEI = "fetched_tei"
    FETCHED_PLAINTEXT = "fetched_plaintext"
    NO_FULLTEXT = "no_fulltext"
    LICENSE_BLOCKED = "license_blocked"
    ERROR = "error"


FETCHED = {Outcome.FETCHED_TEI, Outcome.FETCHED_PLAINTEXT}


@dataclass
class AcquisitionResult:
    doc_doi: str
    outcome: Outcome
    payload_path: Optional[Path]  # present iff outcome is a Fetched*
    detail: str = ""

    def to_record(self) -> dict:
        return {
            "doi": self.doc_doi,
            "outcome": self.outcome.value,
            # filename only, so records compare equal across run directories
            "payload": self.payload_path.name if self.payload_path else None,
            "detail": self.detail,
        }


@dataclass
class Resolved:
    outcome: Outcome
    content: Optional[bytes] = None
    fmt: Optional[str] = None  # "tei" | "txt"
    detail: str = ""


class Resolver(Protocol):
    def resolve(self, doi: str) -> Resolved: ...


def sanitize_doi(doi: str) -> str:
    """Deterministic, filesystem-safe name for a DOI."""
    return re.sub(r"[^0-9a-z.\-]", "_", doi.lower())


class FixtureResolver:
    """Offline resolver: <dir>/<sanitized>.tei.xml or .txt holds the
    payload; <sanitized>.blocked marks a license refusal."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def resolve(self, doi: str) -> Resolved:
        stem = self.directory / sanitize_doi(doi)
        if stem.with_suffix(stem.suffix + ".blocked").exists():
            return Resolved(Outcome.LICENSE_BLOCKED, detail="license marker present")
        for suffix, fmt, outcome in (
            (".tei.xml", "tei", Outcome.FETCHED_TEI),
            (".xml", "tei", Outcome.FETCHED_TEI),
            (".txt", "txt", Outcome.FETCHED_PLAINTEXT),
        ):
            path = Path(str(stem) + suffix)
            if path.exists():
                return Resolved(outcome, path.read_bytes(), fmt, detail=path.name)
        return Resolved(Outcome.NO_FULLTEXT, detail="not in fixture directory")


class LiveResolver:
    """Content negotiation against an HTTP endpoint, one GET per DOI."""

    def __init__(self, base_url: str, min_interval: float = DEFAULT_MIN_INTERVAL):
        self.base_url = base_url.rstrip("/")
        self.min_interval = min_interval
        self._last_request = 0.0

    def _throttle(self) -> None:
        elapsed = time.monotonic() - self._last_request
        if elapsed < self.min_interval:
            time.sleep(self.min_interval - elapsed)
        self._last_request = time.monotonic()

    def resolve(self, doi: str) -> Resolved:
        import requests

        self._throttle()
        try:
            response = requests.get(
                f"{self.base_url}/{doi}",
                headers={"Accept": ACCEPT_HEADER},
                timeout=30,
            )
        except requests.RequestException as exc:
            return Resolved(Outcome.ERROR, detail=str(exc))
        if response.status_code == 403:
            return Resolved(Outcome.LICENSE_BLOCKED, detail="HTTP 403")
        if response.status_code in (404, 410):
            return Resolved(Outcome.NO_FULLTEXT, detail=f"HTTP {response.status_code}")
        if response.status_code != 200:
            return Resolved(Outcome.ERROR, detail=f"HTTP {response.status_code}")
        content_type = response.headers.get("Content-Type", "")
        if "xml" in content_type:
            return Resolved(Outcome.FETCHED_TEI, response.content, "tei", content_type)
        return Resolved(Outcome.FETCHED_PLAINTEXT, response.content, "txt", content_type)


def make_resolver(spec: str, min_interval: float = DEFAULT_MIN_INTERVAL) -> Resolver:
    if spec.startswith(("http://", "https://")):
        return LiveResolver(spec, min_interval=min_interval)
    return FixtureResolver(spec)


def acquire_fulltext(
    dois: Iterable[str], resolver: Resolver, out_dir: str | Path
) -> list[AcquisitionResult]:
    """One result per input DOI, order preserved. A repeated DOI reuses the
    first resolution; a resolver failure never aborts the batch. Payload
    files are written only for fetched outcomes, under sanitized names."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cache: dict[str, AcquisitionResult] = {}
    results = []
    for doi in dois:
        if doi in cache:
            results.append(cache[doi])
            continue
        resolved = resolver.resolve(doi)
        payload_path = None
        if resolved.outcome in FETCHED and resolved.content is not None:
            suffix = ".tei.xml" if resolved.fmt == "tei" else ".txt"
            payload_path = out_dir / (sanitize_doi(doi) + suffix)
            payload_path.write_bytes(resolved.content)
        result = AcquisitionResult(
            doc_doi=doi,
            outcome=resolved.outcome,
            payload_path=payload_path,
            detail=resolved.detail,
        )
        cache[doi] = result
        results.append(result)

    fetched = sum(1 for r in results if r.outcome in FETCHED)
    blocked = sum(1 for r in results if r.outcome is Outcome.LICENSE_BLOCKED)
    missing = sum(1 for r in results if r.outcome is Outcome.NO_FULLTEXT)
    log.info(
        "acquired %d/%d (blocked %d, no full text %d)",
        fetched, len(results), blocked, missing,
    )
    return results
