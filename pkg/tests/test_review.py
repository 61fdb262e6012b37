import itertools
import json
import random

import pytest
from conftest import make_reference, make_sentence
from fastapi.testclient import TestClient

from datarefs.extract import CandidateSpan, Level, MatchMode, evaluate, sentence_key
from datarefs.linkage import LinkResult, Partition
from datarefs.review import (
    Decision,
    ReviewState,
    build_queue,
    compute_item_id,
    create_app,
    state_from_files,
)


def make_link(sentence, start, end, partition, similarity, study=None):
    ref = make_reference(sentence, start, end)
    return LinkResult(
        reference=ref,
        best_study=study,
        similarity=similarity,
        centered_score=similarity - 0.75,
        partition=partition,
    )


def fixed_clock():
    counter = itertools.count()
    return lambda: f"2024-01-01T00:00:{next(counter):02d}+00:00"


def review_fixture(tmp_path, log_name="verdicts.jsonl"):
    """Four-item queue: two catalog matches, one external, one noise."""
    s_a0 = make_sentence("We analyze the General Social Survey files closely.",
                         doc_id="a", section_index=0, sentence_index=0)
    s_a1 = make_sentence("A Panel Survey of Income extract was added.",
                         doc_id="a", section_index=1, sentence_index=3)
    s_b0 = make_sentence("GSS interviews span decades of change.",
                         doc_id="b", section_index=0, sentence_index=0)
    s_b1 = make_sentence("The weather cooperated throughout the study.",
                         doc_id="b", section_index=2, sentence_index=1)
    links = [
        make_link(s_b1, 4, 11, Partition.NON_DATASET, 0.05),
        make_link(s_a1, 2, 24, Partition.EXTERNAL_DATASET, 0.57),
        make_link(s_b0, 0, 3, Partition.CATALOG_DATASET, 0.9, study=102),
        make_link(s_a0, 15, 36, Partition.CATALOG_DATASET, 1.0, study=102),
    ]
    candidates = {
        sentence_key(s_a0): [
            CandidateSpan(s_a0, 30, 36, Level.HIGH, "kw-survey"),
        ],
        sentence_key(s_b0): [
            CandidateSpan(s_b0, 0, 3, Level.MEDIUM, "acronym"),
        ],
    }
    labels = {("a", 0): "Data", ("a", 1): "Methods", ("b", 0): "Introduction"}
    items = build_queue(links, candidates, labels)
    state = ReviewState(items, tmp_path / log_name, clock=fixed_clock())
    return state, items


class TestItemIdentity:
    def test_id_is_short_stable_hash(self):
        a = compute_item_id("doc", 0, 1, 4, 10)
        assert a == compute_item_id("doc", 0, 1, 4, 10)
        assert len(a) == 16
        assert int(a, 16) >= 0

    def test_any_coordinate_changes_the_id(self):
        base = compute_item_id("doc", 0, 1, 4, 10)
        assert compute_item_id("doc", 0, 1, 4, 11) != base
        assert compute_item_id("doc", 0, 2, 4, 10) != base
        assert compute_item_id("other", 0, 1, 4, 10) != base


class TestQueueOrder:
    def test_priority_partitions_then_level_then_similarity(self, tmp_path):
        state, items = review_fixture(tmp_path)
        surfaces = [i.link.reference.surface for i in items]
        # catalog first (high level before medium), then external, then noise
        assert surfaces == [
            "General Social Survey",
            "GSS",
            "Panel Survey of Income",
            "weather",
        ]

    def test_section_labels_attached(self, tmp_path):
        _, items = review_fixture(tmp_path)
        assert items[0].section_label == "Data"
        # unlabeled sections fall back to Other
        assert items[3].section_label == "Other"

    def test_item_level_from_candidates(self, tmp_path):
        _, items = review_fixture(tmp_path)
        assert items[0].level is Level.HIGH
        assert items[1].level is Level.MEDIUM
        assert items[2].level is None

    def test_duplicate_span_collapses_to_one_item(self, tmp_path):
        sentence = make_sentence("GSS appears here.")
        links = [
            make_link(sentence, 0, 3, Partition.CATALOG_DATASET, 1.0, study=102),
            make_link(sentence, 0, 3, Partition.CATALOG_DATASET, 1.0, study=102),
        ]
        state = ReviewState(build_queue(links), tmp_path / "log.jsonl")
        assert len(state.items) == 1

    def test_to_dict_carries_review_context(self, tmp_path):
        _, items = review_fixture(tmp_path)
        payload = items[0].to_dict()
        assert payload["surface"] == "General Social Survey"
        assert payload["sentence_text"].startswith("We analyze")
        assert payload["section_label"] == "Data"
        assert payload["study_id"] == 102
        assert payload["candidates"][0]["pattern_id"] == "kw-survey"


class TestSubmit:
    def test_verdict_appends_and_drains_queue(self, tmp_path):
        state, items = review_fixture(tmp_path)
        assert len(state.queue()) == 4
        verdict = state.submit(items[0].item_id, Decision.ACCEPT_USE, reviewer="rue")
        assert verdict.timestamp == "2024-01-01T00:00:00+00:00"
        assert len(state.queue()) == 3
        assert state.log_path.read_text().count("\n") == 1

    def test_unknown_item_raises_key_error(self, tmp_path):
        state, _ = review_fixture(tmp_path)
        with pytest.raises(KeyError):
            state.submit("feedfacefeedface", Decision.REJECT)

    def test_adjust_requires_span(self, tmp_path):
        state, items = review_fixture(tmp_path)
        with pytest.raises(ValueError, match="adjusted"):
            state.submit(items[0].item_id, Decision.ADJUST_SPAN)

    def test_adjust_span_bounds_checked(self, tmp_path):
        state, items = review_fixture(tmp_path)
        length = len(items[0].sentence.text)
        with pytest.raises(ValueError, match="out of bounds"):
            state.submit(items[0].item_id, Decision.ADJUST_SPAN,
                         adjusted=(0, length + 1))
        with pytest.raises(ValueError):
            state.submit(items[0].item_id, Decision.ADJUST_SPAN, adjusted=(7, 7))

    def test_adjusted_span_with_other_decision_rejected(self, tmp_path):
        state, items = review_fixture(tmp_path)
        with pytest.raises(ValueError, match="only valid"):
            state.submit(items[0].item_id, Decision.REJECT, adjusted=(0, 3))

    def test_resubmission_supersedes_but_log_keeps_history(self, tmp_path):
        state, items = review_fixture(tmp_path)
        target = items[0].item_id
        state.submit(target, Decision.ACCEPT_USE)
        state.submit(target, Decision.REJECT)
        assert state.final_verdicts()[target].decision is Decision.REJECT
        assert len(state.log) == 2
        assert state.log_path.read_text().count("\n") == 2
        assert len(state.queue()) == 3  # still only one item resolved


class TestReplay:
    def test_replay_reconstructs_state(self, tmp_path):
        state, items = review_fixture(tmp_path)
        state.submit(items[0].item_id, Decision.ACCEPT_USE, reviewer="rue")
        state.submit(items[1].item_id, Decision.ADJUST_SPAN, adjusted=(0, 3))
        state.submit(items[0].item_id, Decision.ACCEPT_MENTION)

        replayed = ReviewState(items, state.log_path)
        assert {k: v for k, v in replayed.final_verdicts().items()} == \
            state.final_verdicts()
        assert [i.item_id for i in replayed.queue()] == [
            i.item_id for i in state.queue()
        ]

    def test_every_log_prefix_is_a_valid_state(self, tmp_path):
        state, items = review_fixture(tmp_path)
        rng = random.Random(17)
        for _ in range(100):
            item = rng.choice(items)
            decision = rng.choice(list(Decision))
            if decision is Decision.ADJUST_SPAN:
                end = rng.randint(1, len(item.sentence.text))
                start = rng.randint(0, end - 1)
                state.submit(item.item_id, decision, adjusted=(start, end))
            else:
                state.submit(item.item_id, decision)

        lines = state.log_path.read_text().splitlines()
        assert len(lines) == 100
        partial = tmp_path / "prefix.jsonl"
        for cut in (0, 1, 7, 42, 99, 100):
            partial.write_text("".join(line + "\n" for line in lines[:cut]))
            replayed = ReviewState(items, partial)
            # the prefix state must agree with an incremental recomputation
            expected = {}
            for line in lines[:cut]:
                record = json.loads(line)
                expected[record["item_id"]] = record["decision"]
            assert {
                k: v.decision.value for k, v in replayed.final_verdicts().items()
            } == expected
            assert len(replayed.queue()) == len(items) - len(expected)

    def test_verdict_for_retired_item_is_inert(self, tmp_path):
        state, items = review_fixture(tmp_path)
        state.submit(items[0].item_id, Decision.ACCEPT_USE)
        # rebuild with a shrunken queue: the logged verdict no longer matches
        survivors = items[1:]
        replayed = ReviewState(survivors, state.log_path)
        assert len(replayed.queue()) == len(survivors)
        assert replayed.export_bibliography()["entries"] == []


class TestExports:
    def test_bibliography_groups_doc_study_pairs(self, tmp_path):
        state, items = review_fixture(tmp_path)
        state.submit(items[0].item_id, Decision.ACCEPT_USE, reviewer="rue")
        state.submit(items[1].item_id, Decision.ACCEPT_USE, reviewer="sam")
        payload = state.export_bibliography()
        assert [
            (e["doc_id"], e["study_id"], len(e["provenance"]))
            for e in payload["entries"]
        ] == [("a", 102, 1), ("b", 102, 1)]
        assert payload["mentions"] == []

    def test_same_pair_merges_provenance(self, tmp_path):
        sentence_one = make_sentence("GSS early.", doc_id="a")
        sentence_two = make_sentence("GSS again later.", doc_id="a",
                                     sentence_index=4)
        links = [
            make_link(sentence_one, 0, 3, Partition.CATALOG_DATASET, 1.0, study=102),
            make_link(sentence_two, 0, 3, Partition.CATALOG_DATASET, 1.0, study=102),
        ]
        state = ReviewState(build_queue(links), tmp_path / "log.jsonl",
                            clock=fixed_clock())
        for item in list(state.items.values()):
            state.submit(item.item_id, Decision.ACCEPT_USE)
        payload = state.export_bibliography()
        assert len(payload["entries"]) == 1
        provenance = payload["entries"][0]["provenance"]
        assert len(provenance) == 2
        assert provenance == sorted(provenance, key=lambda p: p["item_id"])

    def test_mentions_listed_separately(self, tmp_path):
        state, items = review_fixture(tmp_path)
        state.submit(items[0].item_id, Decision.ACCEPT_MENTION)
        payload = state.export_bibliography()
        assert payload["entries"] == []
        assert payload["mentions"][0]["surface"] == "General Social Survey"

    def test_rejects_and_unlinked_items_never_enter_bibliography(self, tmp_path):
        state, items = review_fixture(tmp_path)
        state.submit(items[0].item_id, Decision.REJECT)
        state.submit(items[2].item_id, Decision.ACCEPT_USE)  # external, no study
        assert state.export_bibliography()["entries"] == []

    def test_training_export_round_trips_through_evaluation(self, tmp_path):
        state, items = review_fixture(tmp_path)
        state.submit(items[0].item_id, Decision.ADJUST_SPAN, adjusted=(15, 41))
        state.submit(items[1].item_id, Decision.ACCEPT_USE)
        state.submit(items[3].item_id, Decision.REJECT)
        gold = state.export_training()
        spans = {a.sentence.doc_id: a.spans for a in gold}
        assert spans[("a")] == ((15, 41),)
        assert ("b", 0, 0) in {sentence_key(a.sentence) for a in gold}
        rejected = [a for a in gold if a.sentence.sentence_index == 1]
        assert rejected[0].spans == ()  # hard negative from the reject

        predictions = [
            make_reference(a.sentence, start, end)
            for a in gold
            for start, end in a.spans
        ]
        metrics = evaluate(predictions, gold, MatchMode.EXACT_SPAN)
        assert metrics.precision == metrics.recall == metrics.f1 == 1.0

    def test_training_export_drops_overlapping_spans(self, tmp_path):
        sentence = make_sentence("General Social Survey data here.")
        links = [
            make_link(sentence, 0, 21, Partition.CATALOG_DATASET, 1.0, study=102),
            make_link(sentence, 8, 26, Partition.CATALOG_DATASET, 0.8, study=102),
        ]
        state = ReviewState(build_queue(links), tmp_path / "log.jsonl",
                            clock=fixed_clock())
        for item in list(state.items.values()):
            state.submit(item.item_id, Decision.ACCEPT_USE)
        (annotation,) = state.export_training()
        assert annotation.spans == ((0, 21),)

    def test_unreviewed_items_are_not_gold(self, tmp_path):
        state, items = review_fixture(tmp_path)
        state.submit(items[0].item_id, Decision.ACCEPT_USE)
        gold = state.export_training()
        assert len(gold) == 1


@pytest.fixture
def pipeline_out(tmp_path):
    from test_pipeline import run_fixture_pipeline

    _, out_dir = run_fixture_pipeline(tmp_path)
    return out_dir


class TestStateFromFiles:
    def test_queue_built_from_pipeline_outputs(self, pipeline_out, tmp_path):
        state = state_from_files(
            pipeline_out / "links.jsonl",
            pipeline_out / "docs.jsonl",
            tmp_path / "verdicts.jsonl",
            spans_path=pipeline_out / "spans.jsonl",
        )
        assert len(state.queue()) == 12
        first = state.queue()[0]
        assert first.link.partition is Partition.CATALOG_DATASET
        assert first.section_label != ""

    def test_verdicts_survive_process_restart(self, pipeline_out, tmp_path):
        log = tmp_path / "verdicts.jsonl"
        state = state_from_files(
            pipeline_out / "links.jsonl", pipeline_out / "docs.jsonl", log
        )
        target = state.queue()[0].item_id
        state.submit(target, Decision.ACCEPT_USE, reviewer="rue")

        fresh = state_from_files(
            pipeline_out / "links.jsonl", pipeline_out / "docs.jsonl", log
        )
        assert fresh.final_verdicts()[target].decision is Decision.ACCEPT_USE
        assert len(fresh.queue()) == 11


@pytest.fixture
def client(tmp_path):
    state, items = review_fixture(tmp_path)
    return TestClient(create_app(state)), state, items


class TestHttpApi:
    def test_healthz(self, client):
        http, state, _ = client
        body = http.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["items"] == 4

    def test_queue_respects_limit_and_reports_remaining(self, client):
        http, _, _ = client
        body = http.get("/queue", params={"limit": 2}).json()
        assert len(body["items"]) == 2
        assert body["remaining"] == 4
        assert body["items"][0]["surface"] == "General Social Survey"

    def test_item_lookup(self, client):
        http, _, items = client
        ok = http.get(f"/items/{items[0].item_id}")
        assert ok.status_code == 200
        assert ok.json()["item_id"] == items[0].item_id
        assert http.get("/items/0000000000000000").status_code == 404

    def test_post_verdict_created(self, client):
        http, state, items = client
        response = http.post(
            "/verdicts",
            json={"item_id": items[0].item_id, "decision": "accept_use",
                  "reviewer": "rue"},
        )
        assert response.status_code == 201
        body = response.json()
        assert body["acknowledged"]["decision"] == "accept_use"
        assert body["remaining"] == 3
        assert state.final_verdicts()[items[0].item_id].reviewer == "rue"

    def test_post_verdict_error_codes(self, client):
        http, _, items = client
        unknown = http.post(
            "/verdicts", json={"item_id": "0" * 16, "decision": "reject"}
        )
        assert unknown.status_code == 404
        bad_decision = http.post(
            "/verdicts", json={"item_id": items[0].item_id, "decision": "maybe"}
        )
        assert bad_decision.status_code == 422
        bad_span = http.post(
            "/verdicts",
            json={"item_id": items[0].item_id, "decision": "adjust_span",
                  "adjusted": [5]},
        )
        assert bad_span.status_code == 422
        out_of_bounds = http.post(
            "/verdicts",
            json={"item_id": items[0].item_id, "decision": "adjust_span",
                  "adjusted": [0, 9999]},
        )
        assert out_of_bounds.status_code == 422

    def test_export_endpoints(self, client):
        http, _, items = client
        http.post("/verdicts", json={"item_id": items[0].item_id,
                                     "decision": "accept_use"})
        http.post("/verdicts", json={"item_id": items[3].item_id,
                                     "decision": "reject"})
        bibliography = http.get("/exports/bibliography").json()
        assert [(e["doc_id"], e["study_id"]) for e in bibliography["entries"]] == [
            ("a", 102)
        ]
        training = http.get("/exports/training").json()
        starts = {r["start"] for r in training["records"]}
        assert starts == {15, None}

    def test_queue_drains_over_http(self, client):
        http, _, items = client
        for item in items:
            http.post("/verdicts", json={"item_id": item.item_id,
                                         "decision": "reject"})
        assert http.get("/queue").json()["remaining"] == 0

    def test_static_mount_serves_ui_assets(self, tmp_path):
        ui = tmp_path / "ui"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>review</title>")
        state, _ = review_fixture(tmp_path)
        http = TestClient(create_app(state, static_dir=ui))
        resp = http.get("/ui/")
        assert resp.status_code == 200
        assert "review" in resp.text
        # API routes unaffected by the mount
        assert http.get("/healthz").json()["status"] == "ok"

    def test_no_static_mount_by_default(self, client):
        http, _, _ = client
        assert http.get("/ui/").status_code == 404
