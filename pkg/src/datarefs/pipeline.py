"""Six-stage batch pipeline: search, acquire, parse, extract, link,
report. Stages communicate through files under the run directory, and a
manifest records per-stage input digests so an interrupted or repeated
run skips work whose inputs have not changed.

Outputs are written with stable ordering, so two runs over the same
inputs produce byte-identical stage outputs (the manifest itself carries
wall-clock timings and is exempt).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import acquire as acquire_mod
from . import catalog as catalog_mod
from . import corpus_index, docparse, extract, linkage, report
from .jsonl import dumps, read_jsonl, write_jsonl

log = logging.getLogger(__name__)

STAGES = ["search", "acquire", "parse", "extract", "link", "report"]

ENV_PREFIX = "DATAREFS_"

_DEFAULTS = {
    "theta": linkage.DEFAULT_THETA,
    "floor": linkage.DEFAULT_FLOOR,
    "seed": 13,
    "split_ratio": 0.8,
    "detector": "rule",
    "derive_acronyms": False,
    "bibliography": None,
    "resolver": None,
    "predictions": None,
    "min_interval": 0.0,
}


class ConfigError(ValueError):
    """Configuration rejected before any stage ran."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def load_config(path: str | Path, env: Optional[dict] = None) -> dict:
    """Read the run config and apply DATAREFS_* environment overrides.
    Override values are parsed as JSON when possible, else kept as text."""
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    env = os.environ if env is None else env
    for key, raw in env.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        try:
            config[name] = json.loads(raw)
        except json.JSONDecodeError:
            config[name] = raw
    base = Path(path).resolve().parent
    for key in ("catalog", "corpus", "bibliography", "predictions"):
        if config.get(key):
            config[key] = str((base / config[key]).resolve())
    if config.get("resolver") and not str(config["resolver"]).startswith("http"):
        config["resolver"] = str((base / config["resolver"]).resolve())
    if config.get("out_dir"):
        config["out_dir"] = str((base / config["out_dir"]).resolve())
    return config


def validate_config(config: dict, stop_after: Optional[str] = None) -> dict:
    """Fill defaults and fail fast on anything that would doom a stage."""
    cfg = dict(_DEFAULTS)
    cfg.update(config)
    for key in ("catalog", "corpus", "out_dir"):
        if not cfg.get(key):
            raise ConfigError(f"config missing required key: {key}")
    for key in ("catalog", "corpus", "bibliography", "predictions"):
        if cfg.get(key) and not Path(cfg[key]).exists():
            raise ConfigError(f"{key} file not found: {cfg[key]}")
    theta, floor = float(cfg["theta"]), float(cfg["floor"])
    if not (0.0 <= floor < theta <= 1.0):
        raise ConfigError(f"need 0 <= floor < theta <= 1, got floor={floor} theta={theta}")
    ratio = float(cfg["split_ratio"])
    if not (0.0 < ratio < 1.0):
        raise ConfigError(f"split_ratio must be in (0, 1), got {ratio}")
    if cfg["detector"] not in ("rule", "external"):
        raise ConfigError(f"detector must be 'rule' or 'external', got {cfg['detector']!r}")
    if cfg["detector"] == "external" and not cfg.get("predictions"):
        raise ConfigError("detector 'external' requires a predictions file")
    last = stop_after or "report"
    if last not in STAGES:
        raise ConfigError(f"unknown stage: {last}")
    if STAGES.index(last) >= STAGES.index("acquire"):
        resolver = cfg.get("resolver")
        if not resolver:
            raise ConfigError("resolver required to run the acquire stage")
        if not str(resolver).startswith("http") and not Path(resolver).is_dir():
            raise ConfigError(f"resolver fixture directory not found: {resolver}")
    return cfg


# ---------------------------------------------------------------------------
# Manifest


@dataclass
class StageRecord:
    name: str
    status: str  # ok | failed | skipped
    input_digest: str
    outputs: list[str] = field(default_factory=list)
    counts: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "input_digest": self.input_digest,
            "outputs": self.outputs,
            "counts": self.counts,
            "seconds": round(self.seconds, 3),
        }


@dataclass
class RunManifest:
    run_id: str
    config_digest: str
    stages: dict[str, StageRecord] = field(default_factory=dict)

    def save(self, out_dir: Path) -> None:
        payload = {
            "run_id": self.run_id,
            "config_digest": self.config_digest,
            "stages": [self.stages[s].to_dict() for s in STAGES if s in self.stages],
        }
        path = out_dir / "manifest.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, out_dir: Path) -> Optional["RunManifest"]:
        path = out_dir / "manifest.json"
        if not path.exists():
            return None
        payload = json.loads(path.read_text(encoding="utf-8"))
        manifest = cls(run_id=payload["run_id"], config_digest=payload["config_digest"])
        for record in payload.get("stages", []):
            manifest.stages[record["name"]] = StageRecord(
                name=record["name"],
                status=record["status"],
                input_digest=record["input_digest"],
                outputs=record.get("outputs", []),
                counts=record.get("counts", {}),
                seconds=record.get("seconds", 0.0),
            )
        return manifest


def _digest_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_config(cfg: dict) -> str:
    # out_dir excluded: the same logical run may live anywhere on disk
    scrubbed = {k: v for k, v in cfg.items() if k != "out_dir"}
    blob = json.dumps(scrubbed, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _combine(paths: list[Path], extra: str = "") -> str:
    h = hashlib.sha256(extra.encode("utf-8"))
    for path in sorted(paths):
        h.update(_digest_file(path).encode("ascii"))
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Stages. Each reads files, writes files, returns counts.


def _stage_search(cfg: dict, out: Path) -> dict:
    studies, rejects = catalog_mod.load_catalog(cfg["catalog"])
    if rejects:
        log.warning("catalog: %d malformed entries skipped", len(rejects))
    eligible = catalog_mod.filter_eligible(studies)
    queries = catalog_mod.expand_catalog_queries(eligible)

    docs = corpus_index.load_corpus(cfg["corpus"])
    index = corpus_index.build_index(docs)
    candidates, tally = corpus_index.search_catalog(index, queries)

    known = set()
    if cfg.get("bibliography"):
        entries = report.load_bibliography(cfg["bibliography"])
        known = report.bibliography_identifiers(entries)
    fresh = corpus_index.dedup_against_bibliography(candidates, known)

    write_jsonl(
        out / "candidates.jsonl",
        (
            {
                "doc_id": c.doc_id,
                "doi": c.doi,
                "matched_queries": sorted({h.query.phrase for h in c.matched_queries}),
                "missing_doi": c.missing_doi,
            }
            for c in fresh
        ),
    )
    tally_payload = {
        "total": tally.total,
        "by_kind": {
            kind.value: {
                "count": tally.counts.get(kind, 0),
                "percent": tally.percentages.get(kind, 0),
            }
            for kind in catalog_mod.QueryKind
        },
    }
    (out / "tally.json").write_text(
        json.dumps(tally_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return {
        "studies": len(eligible),
        "queries": len(queries),
        "docs_indexed": index.doc_count,
        "candidate_docs": len(candidates),
        "new_docs": len(fresh),
    }


def _stage_acquire(cfg: dict, out: Path) -> dict:
    candidates = list(read_jsonl(out / "candidates.jsonl"))
    dois = [c["doi"] for c in candidates if c.get("doi")]
    payload_dir = out / "payloads"
    resolver = acquire_mod.make_resolver(
        cfg["resolver"], min_interval=float(cfg.get("min_interval", 0.0))
    )
    results = acquire_mod.acquire_fulltext(dois, resolver, payload_dir)
    write_jsonl(out / "acquisitions.jsonl", (r.to_record() for r in results))
    counts = {"requested": len(dois), "skipped_no_doi": len(candidates) - len(dois)}
    for outcome in acquire_mod.Outcome:
        counts[outcome.value] = sum(1 for r in results if r.outcome is outcome)
    return counts


def _stage_parse(cfg: dict, out: Path) -> dict:
    doc_id_by_doi = {
        c["doi"].lower(): c["doc_id"]
        for c in read_jsonl(out / "candidates.jsonl")
        if c.get("doi")
    }
    payload_dir = out / "payloads"
    documents = []
    for record in read_jsonl(out / "acquisitions.jsonl"):
        if record["outcome"] not in ("fetched_tei", "fetched_plaintext"):
            continue
        payload = payload_dir / record["payload"]
        text = payload.read_text(encoding="utf-8")
        doc_id = doc_id_by_doi.get(record["doi"].lower(), record["doi"])
        if record["outcome"] == "fetched_tei":
            doc = docparse.parse_tei(text, doc_id=doc_id)
        else:
            doc = docparse.parse_plaintext(text, doc_id=doc_id)
        if doc.doi is None:
            doc.doi = record["doi"]
        docparse.segment_document(doc)
        documents.append(doc)
    documents.sort(key=lambda d: d.doc_id)
    write_jsonl(out / "docs.jsonl", (docparse.document_to_record(d) for d in documents))
    return {
        "docs": len(documents),
        "sections": sum(len(d.sections) for d in documents),
        "sentences": sum(1 for d in documents for _ in d.iter_sentences()),
    }


def _stage_extract(cfg: dict, out: Path) -> dict:
    documents = [docparse.document_from_record(r) for r in read_jsonl(out / "docs.jsonl")]
    studies, _ = catalog_mod.load_catalog(cfg["catalog"])
    gazetteer = extract.build_gazetteer(
        catalog_mod.filter_eligible(studies),
        derive_acronyms=bool(cfg.get("derive_acronyms", False)),
    )
    use_rule = cfg.get("detector", "rule") == "rule"

    span_records = []
    references = []
    sentences_with_candidates = 0
    for doc in documents:
        for sentence in doc.iter_sentences():
            candidates = extract.extract_candidates(sentence)
            if candidates:
                sentences_with_candidates += 1
            for c in candidates:
                span_records.append(
                    {
                        "doc_id": sentence.doc_id,
                        "section_index": sentence.section_index,
                        "sentence_index": sentence.sentence_index,
                        "start": c.start,
                        "end": c.end,
                        "surface": c.surface,
                        "level": c.level.value,
                        "pattern_id": c.pattern_id,
                    }
                )
            if use_rule:
                references.extend(extract.detect_rule(sentence, gazetteer, candidates))

    if cfg.get("predictions"):
        external, rejects = extract.load_external_predictions(cfg["predictions"], documents)
        if rejects:
            log.warning("predictions: %d records rejected", len(rejects))
        references = extract.merge_overlaps(references + external)

    references.sort(
        key=lambda r: (
            r.sentence.doc_id,
            r.sentence.section_index,
            r.sentence.sentence_index,
            r.start,
        )
    )
    write_jsonl(out / "spans.jsonl", span_records)
    write_jsonl(out / "refs.jsonl", (extract.reference_to_record(r) for r in references))
    return {
        "sentences_with_candidates": sentences_with_candidates,
        "candidate_spans": len(span_records),
        "references": len(references),
    }


def _stage_link(cfg: dict, out: Path) -> dict:
    documents = [docparse.document_from_record(r) for r in read_jsonl(out / "docs.jsonl")]
    table = extract.sentence_lookup(documents)
    references = []
    for record in read_jsonl(out / "refs.jsonl"):
        key = (record["doc_id"], record["section_index"], record["sentence_index"])
        sentence = table[key]
        references.append(
            extract.DataReference(
                sentence=sentence,
                start=record["start"],
                end=record["end"],
                surface=record["surface"],
                source=extract.Source(record.get("source", "rule")),
                confidence=float(record.get("confidence", 1.0)),
            )
        )
    studies, _ = catalog_mod.load_catalog(cfg["catalog"])
    linker = linkage.Linker(
        catalog_mod.filter_eligible(studies),
        theta=float(cfg["theta"]),
        floor=float(cfg["floor"]),
    )
    links = [linker.link(ref) for ref in references]
    write_jsonl(out / "links.jsonl", (linkage.link_to_record(r) for r in links))
    counts = {"references": len(links)}
    for partition in linkage.Partition:
        counts[partition.value] = sum(1 for r in links if r.partition is partition)
    return counts


def load_links(links_path: Path, documents: list) -> list:
    """Rehydrate LinkResult objects against parsed documents."""
    table = extract.sentence_lookup(documents)
    links = []
    for record in read_jsonl(links_path):
        key = (record["doc_id"], record["section_index"], record["sentence_index"])
        sentence = table[key]
        reference = extract.DataReference(
            sentence=sentence,
            start=record["start"],
            end=record["end"],
            surface=record["surface"],
            source=extract.Source(record.get("source", "rule")),
            confidence=float(record.get("confidence", 1.0)),
        )
        links.append(
            linkage.LinkResult(
                reference=reference,
                best_study=record.get("study_id"),
                similarity=record["similarity"],
                centered_score=record["centered_score"],
                partition=linkage.Partition(record["partition"]),
            )
        )
    return links


def _stage_report(cfg: dict, out: Path) -> dict:
    documents = [docparse.document_from_record(r) for r in read_jsonl(out / "docs.jsonl")]
    links = load_links(out / "links.jsonl", documents)

    entries = studies = None
    if cfg.get("bibliography"):
        entries = report.load_bibliography(cfg["bibliography"])
        studies, _ = catalog_mod.load_catalog(cfg["catalog"])
    payload, rendered = report.compose_report(links, documents, entries, studies)

    (out / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "report.txt").write_text(rendered, encoding="utf-8")
    return {
        "links": len(links),
        "review_queue": payload["partitions"]["review_queue"],
        "acquisitions": payload["partitions"]["acquisitions"],
    }


_STAGE_FUNCS: dict[str, Callable[[dict, Path], dict]] = {
    "search": _stage_search,
    "acquire": _stage_acquire,
    "parse": _stage_parse,
    "extract": _stage_extract,
    "link": _stage_link,
    "report": _stage_report,
}

_STAGE_OUTPUTS = {
    "search": ["candidates.jsonl", "tally.json"],
    "acquire": ["acquisitions.jsonl"],
    "parse": ["docs.jsonl"],
    "extract": ["spans.jsonl", "refs.jsonl"],
    "link": ["links.jsonl"],
    "report": ["report.json", "report.txt"],
}

# Config inputs re-read by each stage; a change there must invalidate it.
_STAGE_CONFIG_INPUTS = {
    "search": ["catalog", "corpus", "bibliography"],
    "acquire": [],
    "parse": [],
    "extract": ["catalog", "predictions"],
    "link": ["catalog"],
    "report": ["catalog", "bibliography"],
}

# Scalar settings each stage reads. min_interval is pacing, not content,
# so it never invalidates anything.
_STAGE_CONFIG_VALUES = {
    "search": [],
    "acquire": ["resolver"],
    "parse": [],
    "extract": ["detector", "derive_acronyms", "predictions"],
    "link": ["theta", "floor"],
    "report": [],
}

_STAGE_UPSTREAM = {
    "search": [],
    "acquire": ["candidates.jsonl"],
    "parse": ["candidates.jsonl", "acquisitions.jsonl"],
    "extract": ["docs.jsonl"],
    "link": ["docs.jsonl", "refs.jsonl"],
    "report": ["docs.jsonl", "links.jsonl"],
}


def _stage_input_digest(name: str, cfg: dict, out: Path) -> str:
    """Content address of everything this stage reads: its slice of the
    config plus upstream output files. Unrelated config keys (say, theta
    for the parse stage) leave the digest alone, so a threshold tweak
    reruns only the stages that consume it."""
    paths = []
    for key in _STAGE_CONFIG_INPUTS[name]:
        if cfg.get(key):
            paths.append(Path(cfg[key]))
    for rel in _STAGE_UPSTREAM[name]:
        path = out / rel
        if path.exists():
            paths.append(path)
    values = {key: cfg.get(key) for key in _STAGE_CONFIG_VALUES[name]}
    extra = f"{name}|{json.dumps(values, sort_keys=True, default=str)}"
    return _combine(paths, extra=extra)


def run_pipeline(
    config: dict,
    stop_after: Optional[str] = None,
    force: bool = False,
) -> RunManifest:
    """Run stages in order, skipping any whose inputs are unchanged since
    the manifest last saw them. Raises ConfigError before side effects and
    StageError when a stage body fails."""
    cfg = validate_config(config, stop_after=stop_after)
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    config_digest = _digest_config(cfg)
    manifest = RunManifest.load(out)
    if manifest is None:
        manifest = RunManifest(run_id=config_digest[:12], config_digest=config_digest)
    else:
        # stage records survive a config edit; each stage's own input
        # digest decides whether its outputs are still valid
        manifest.run_id = config_digest[:12]
        manifest.config_digest = config_digest

    last = stop_after or "report"
    for name in STAGES[: STAGES.index(last) + 1]:
        digest = _stage_input_digest(name, cfg, out)
        prev = manifest.stages.get(name)
        outputs_present = all((out / rel).exists() for rel in _STAGE_OUTPUTS[name])
        if (
            not force
            and prev is not None
            and prev.status in ("ok", "skipped")
            and prev.input_digest == digest
            and outputs_present
        ):
            log.info("stage %s: inputs unchanged, skipping", name)
            manifest.stages[name] = StageRecord(
                name=name,
                status="skipped",
                input_digest=digest,
                outputs=prev.outputs,
                counts=prev.counts,
                seconds=0.0,
            )
            manifest.save(out)
            continue
        log.info("stage %s: running", name)
        t0 = time.perf_counter()
        try:
            counts = _STAGE_FUNCS[name](cfg, out)
        except Exception as exc:
            manifest.stages[name] = StageRecord(
                name=name, status="failed", input_digest=digest, seconds=time.perf_counter() - t0
            )
            manifest.save(out)
            raise StageError(name, exc) from exc
        manifest.stages[name] = StageRecord(
            name=name,
            status="ok",
            input_digest=digest,
            outputs=_STAGE_OUTPUTS[name],
            counts=counts,
            seconds=time.perf_counter() - t0,
        )
        manifest.save(out)
    return manifest


def funnel_table(manifest: RunManifest) -> str:
    """One row per completed stage with its headline counts."""
    rows = [["stage", "status", "counts"]]
    for name in STAGES:
        record = manifest.stages.get(name)
        if record is None:
            continue
        counts = ", ".join(f"{k}={v}" for k, v in record.counts.items())
        rows.append([record.name, record.status, counts])
    width0 = max(len(r[0]) for r in rows)
    width1 = max(len(r[1]) for r in rows)
    return "\n".join(f"{r[0]:<{width0}}  {r[1]:<{width1}}  {r[2]}" for r in rows)
