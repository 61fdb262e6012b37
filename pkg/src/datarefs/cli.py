"""Command-line front end. `run` drives the whole pipeline from a config
file; each stage also works standalone on explicit inputs, so partial
reruns and debugging do not need a full run directory.

Exit codes: 0 on success, 1 for validation problems (bad config, missing
files, malformed inputs), 2 when stage execution fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import acquire as acquire_mod
from . import catalog as catalog_mod
from . import corpus_index, docparse, extract, linkage, pipeline, report, review
from .jsonl import read_jsonl, write_jsonl

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="datarefs",
        description="find, link, and review informal dataset references in full text",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline from a config file")
    run.add_argument("--config", required=True, help="run configuration JSON")
    run.add_argument("--stop-after", choices=pipeline.STAGES, default=None)
    run.add_argument("--force", action="store_true",
                     help="re-run stages even when inputs are unchanged")

    search = sub.add_parser("search", help="phrase-search the corpus for catalog studies")
    search.add_argument("--catalog", required=True)
    search.add_argument("--corpus", required=True, help="manifest file or document directory")
    search.add_argument("--bibliography", default=None)
    search.add_argument("--out", required=True, help="hits output (jsonl)")

    acq = sub.add_parser("acquire", help="fetch full text for candidate DOIs")
    acq.add_argument("--dois", required=True, help="DOI list, one per line or jsonl")
    acq.add_argument("--resolver", required=True, help="base URL or fixture directory")
    acq.add_argument("--out", required=True, help="output directory for payloads")
    acq.add_argument("--min-interval", type=float, default=1.0)

    parse = sub.add_parser("parse", help="parse TEI or plaintext into sentence records")
    parse.add_argument("--in", dest="in_dir", required=True, help="directory of documents")
    parse.add_argument("--out", required=True, help="docs output (jsonl)")

    ext = sub.add_parser("extract", help="detect dataset references in parsed documents")
    ext.add_argument("--docs", required=True)
    ext.add_argument("--catalog", required=True)
    ext.add_argument("--detector", choices=["rule", "external"], default="rule")
    ext.add_argument("--predictions", default=None, help="external model predictions (jsonl)")
    ext.add_argument("--derive-acronyms", action="store_true")
    ext.add_argument("--out", required=True, help="references output (jsonl)")

    link = sub.add_parser("link", help="link references to their best catalog match")
    link.add_argument("--refs", required=True)
    link.add_argument("--catalog", required=True)
    link.add_argument("--theta", type=float, default=linkage.DEFAULT_THETA)
    link.add_argument("--floor", type=float, default=linkage.DEFAULT_FLOOR)
    link.add_argument("--out", required=True, help="links output (jsonl)")

    rep = sub.add_parser("report", help="summarize linked references")
    rep.add_argument("--links", required=True)
    rep.add_argument("--docs", required=True)
    rep.add_argument("--catalog", default=None)
    rep.add_argument("--bibliography", default=None)
    rep.add_argument("--out", required=True, help="output directory")

    ev = sub.add_parser("eval", help="score predictions against gold annotations")
    ev.add_argument("--gold", required=True)
    ev.add_argument("--pred", required=True)
    ev.add_argument("--mode", choices=[m.value for m in extract.MatchMode], default="exact")

    serve = sub.add_parser("serve", help="start the review HTTP service")
    serve.add_argument("--links", required=True, help="links.jsonl from a pipeline run")
    serve.add_argument("--docs", required=True, help="docs.jsonl from a pipeline run")
    serve.add_argument("--spans", default=None, help="spans.jsonl for level context")
    serve.add_argument("--log", required=True, help="verdict log path (created if absent)")
    serve.add_argument("--ui", default=None, help="directory of web client assets to mount at /ui")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    return parser


def _require_files(*paths: Optional[str]) -> None:
    for path in paths:
        if path and not Path(path).exists():
            raise pipeline.ConfigError(f"file not found: {path}")


def _cmd_run(args: argparse.Namespace) -> int:
    config = pipeline.load_config(args.config)
    manifest = pipeline.run_pipeline(config, stop_after=args.stop_after, force=args.force)
    print(pipeline.funnel_table(manifest))
    return 0


def _cmd_search(args: argparse.Namespace) -> int:
    _require_files(args.catalog, args.corpus, args.bibliography)
    studies, rejects = catalog_mod.load_catalog(args.catalog)
    if rejects:
        log.warning("catalog: %d malformed entries skipped", len(rejects))
    queries = catalog_mod.expand_catalog_queries(catalog_mod.filter_eligible(studies))
    index = corpus_index.build_index(corpus_index.load_corpus(args.corpus))
    candidates, tally = corpus_index.search_catalog(index, queries)
    known = set()
    if args.bibliography:
        known = report.bibliography_identifiers(report.load_bibliography(args.bibliography))
    fresh = corpus_index.dedup_against_bibliography(candidates, known)
    n = write_jsonl(
        args.out,
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
    for kind in catalog_mod.QueryKind:
        print(f"{kind.value}: {tally.counts.get(kind, 0)} hits "
              f"({tally.percentages.get(kind, 0)}%)")
    print(f"{n} candidate documents -> {args.out}")
    return 0


def _cmd_acquire(args: argparse.Namespace) -> int:
    _require_files(args.dois)
    dois = []
    with open(args.dois, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                record = json.loads(line)
                if record.get("doi"):
                    dois.append(record["doi"])
            else:
                dois.append(line)
    resolver = acquire_mod.make_resolver(args.resolver, min_interval=args.min_interval)
    out_dir = Path(args.out)
    results = acquire_mod.acquire_fulltext(dois, resolver, out_dir / "payloads")
    write_jsonl(out_dir / "acquisitions.jsonl", (r.to_record() for r in results))
    for outcome in acquire_mod.Outcome:
        count = sum(1 for r in results if r.outcome is outcome)
        if count:
            print(f"{outcome.value}: {count}")
    return 0


def _cmd_parse(args: argparse.Namespace) -> int:
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise pipeline.ConfigError(f"not a directory: {args.in_dir}")
    documents = []
    for path in sorted(in_dir.iterdir()):
        name = path.name.lower()
        doc_id = path.name.split(".")[0]
        if name.endswith((".tei.xml", ".xml")):
            doc = docparse.parse_tei(path.read_text(encoding="utf-8"), doc_id=doc_id)
        elif name.endswith(".txt"):
            doc = docparse.parse_plaintext(path.read_text(encoding="utf-8"), doc_id=doc_id)
        else:
            continue
        docparse.segment_document(doc)
        documents.append(doc)
    n = write_jsonl(args.out, (docparse.document_to_record(d) for d in documents))
    print(f"{n} documents -> {args.out}")
    return 0


def _cmd_extract(args: argparse.Namespace) -> int:
    _require_files(args.docs, args.catalog, args.predictions)
    if args.detector == "external" and not args.predictions:
        raise pipeline.ConfigError("detector 'external' requires --predictions")
    documents = [docparse.document_from_record(r) for r in read_jsonl(args.docs)]
    studies, _ = catalog_mod.load_catalog(args.catalog)
    gazetteer = extract.build_gazetteer(
        catalog_mod.filter_eligible(studies), derive_acronyms=args.derive_acronyms
    )
    references = []
    if args.detector == "rule":
        for doc in documents:
            for sentence in doc.iter_sentences():
                candidates = extract.extract_candidates(sentence)
                references.extend(extract.detect_rule(sentence, gazetteer, candidates))
    if args.predictions:
        external, rejects = extract.load_external_predictions(args.predictions, documents)
        if rejects:
            log.warning("predictions: %d records rejected", len(rejects))
        references = extract.merge_overlaps(references + external)
    references.sort(
        key=lambda r: (r.sentence.doc_id, r.sentence.section_index,
                       r.sentence.sentence_index, r.start)
    )
    n = write_jsonl(args.out, (extract.reference_to_record(r) for r in references))
    print(f"{n} references -> {args.out}")
    return 0


def _cmd_link(args: argparse.Namespace) -> int:
    _require_files(args.refs, args.catalog)
    studies, _ = catalog_mod.load_catalog(args.catalog)
    linker = linkage.Linker(
        catalog_mod.filter_eligible(studies), theta=args.theta, floor=args.floor
    )
    links = []
    for record in read_jsonl(args.refs):
        # standalone mode has no document store; carry identity on a stub
        sentence = docparse.Sentence(
            doc_id=record["doc_id"],
            section_index=record["section_index"],
            sentence_index=record["sentence_index"],
            text=record["surface"],
            start=0,
            end=len(record["surface"]),
        )
        reference = extract.DataReference(
            sentence=sentence,
            start=record["start"],
            end=record["end"],
            surface=record["surface"],
            source=extract.Source(record.get("source", "rule")),
            confidence=float(record.get("confidence", 1.0)),
        )
        links.append(linker.link(reference))
    n = write_jsonl(args.out, (linkage.link_to_record(r) for r in links))
    for partition in linkage.Partition:
        print(f"{partition.value}: {sum(1 for r in links if r.partition is partition)}")
    print(f"{n} links -> {args.out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    _require_files(args.links, args.docs, args.catalog, args.bibliography)
    documents = [docparse.document_from_record(r) for r in read_jsonl(args.docs)]
    links = pipeline.load_links(Path(args.links), documents)
    entries = studies = None
    if args.bibliography and args.catalog:
        entries = report.load_bibliography(args.bibliography)
        studies, _ = catalog_mod.load_catalog(args.catalog)
    payload, rendered = report.compose_report(links, documents, entries, studies)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "report.txt").write_text(rendered, encoding="utf-8")
    print(rendered)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    _require_files(args.gold, args.pred)
    metrics = extract.evaluate_files(args.gold, args.pred, mode=extract.MatchMode(args.mode))
    payload = {
        "mode": metrics.mode.value,
        "true_positives": metrics.true_positives,
        "false_positives": metrics.false_positives,
        "false_negatives": metrics.false_negatives,
        "precision": metrics.precision,
        "recall": metrics.recall,
        "f1": metrics.f1,
        "sentence_recall": metrics.sentence_recall,
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    _require_files(args.links, args.docs, args.spans)
    static_dir = None
    if args.ui is not None:
        static_dir = Path(args.ui)
        if not static_dir.is_dir():
            raise pipeline.ConfigError(f"not a directory: {args.ui}")
    state = review.state_from_files(args.links, args.docs, args.log, spans_path=args.spans)
    app = review.create_app(state, static_dir=static_dir)
    print(f"review service on http://{args.host}:{args.port} "
          f"({len(state.queue())} items pending)")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "search": _cmd_search,
    "acquire": _cmd_acquire,
    "parse": _cmd_parse,
    "extract": _cmd_extract,
    "link": _cmd_link,
    "report": _cmd_report,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except pipeline.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (pipeline.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
