"""Jaro similarity, postMessage comparison, observation ingest, trait lifting."""

import json
import random

import pytest

from cosiscan.dynamic import (
    DynamicObservation,
    ObservationError,
    ingest_observations,
    jaro_similarity,
    lift_traits,
    plan_dynamic_collection,
    postmessage_differs,
)
from cosiscan.response import ResponseSignature

from oracles import jaro_reference, random_string
from test_kb import sig


class TestJaro:
    def test_identity(self):
        for s in ("", "a", "hello world", "ready:user=alice"):
            assert jaro_similarity(s, s) == 1.0

    def test_symmetry(self):
        rng = random.Random(7)
        for _ in range(200):
            s, t = random_string(rng), random_string(rng)
            assert jaro_similarity(s, t) == pytest.approx(jaro_similarity(t, s), abs=1e-15)

    def test_disjoint_alphabets(self):
        assert jaro_similarity("aaaa", "bbbb") == 0.0
        assert jaro_similarity("abc", "xyz") == 0.0

    def test_known_value(self):
        # 16 of 16 and 17 characters match with no transpositions:
        # (16/16 + 16/17 + 16/16) / 3.
        expected = (1.0 + 16.0 / 17.0 + 1.0) / 3.0
        assert jaro_similarity("ready:user=alice", "ready:user=alice2") == pytest.approx(expected)

    def test_against_reference_1000_pairs(self):
        rng = random.Random(42)
        for _ in range(1000):
            s, t = random_string(rng), random_string(rng)
            assert abs(jaro_similarity(s, t) - jaro_reference(s, t)) <= 1e-12, (s, t)


class TestPostmessageDiffers:
    def test_count_difference(self):
        assert postmessage_differs([], [{"origin": "http://a", "data": "m"}], 0.9)

    def test_identical_lists(self):
        msgs = [{"origin": "http://a", "data": "ready"}]
        assert not postmessage_differs(msgs, list(msgs), 0.9)

    def test_small_payload_drift_tolerated(self):
        # jaro("ready:user=alice", "ready:user=alice2") ~= 0.980 >= 0.90
        a = [{"origin": "http://a", "data": "ready:user=alice"}]
        b = [{"origin": "http://a", "data": "ready:user=alice2"}]
        assert not postmessage_differs(a, b, 0.9)

    def test_origin_difference(self):
        a = [{"origin": "http://a", "data": "m"}]
        b = [{"origin": "http://b", "data": "m"}]
        assert postmessage_differs(a, b, 0.9)

    def test_dissimilar_payloads(self):
        a = [{"origin": "http://a", "data": "logged-in-as-admin"}]
        b = [{"origin": "http://a", "data": "xxxxx"}]
        assert postmessage_differs(a, b, 0.9)

    def test_threshold_validated(self):
        with pytest.raises(ValueError):
            postmessage_differs([], [], 1.5)


OBS_RECORD = {
    "url": "http://target.example/offline.php",
    "state_id": "LO",
    "browser_id": "firefox",
    "inclusion_method": "object",
    "events": ["onload"],
    "properties": {},
    "postmessages": [],
    "js_error_count": 0,
    "readable_objects": [],
    "csp_report_received": False,
    "appcache_event": "none",
    "window_ms": 6000,
}


class TestIngest:
    def test_single_record(self):
        obs = ingest_observations(json.dumps(OBS_RECORD))
        assert len(obs) == 1
        assert obs[0].events == ("onload",)

    def test_empty_document(self):
        assert ingest_observations("") == []
        assert ingest_observations("\n\n") == []

    def test_negative_duration_rejected(self):
        record = dict(OBS_RECORD, properties={"duration": -2})
        with pytest.raises(ObservationError, match="record 0"):
            ingest_observations(json.dumps(record))

    def test_error_carries_record_index(self):
        lines = [json.dumps(OBS_RECORD), "{broken"]
        with pytest.raises(ObservationError, match="record 1"):
            ingest_observations("\n".join(lines))

    def test_unknown_properties_preserved(self):
        record = dict(OBS_RECORD, properties={"x-weird-prop": "kept"})
        obs = ingest_observations(json.dumps(record))[0]
        assert obs.property("x-weird-prop") == "kept"


class TestLiftTraits:
    def test_frame_count(self):
        obs = DynamicObservation(
            url="u", state_id="s", browser_id="chrome", inclusion_method="iframe",
            properties=(("contentWindow.length", 3),),
        )
        lifted = lift_traits(obs, sig(200, "html"))
        assert lifted.trait("frame-count") == 3

    def test_empty_postmessages_enable_no_broadcast_side(self):
        obs = DynamicObservation(
            url="u", state_id="s", browser_id="chrome", inclusion_method="iframe",
        )
        lifted = lift_traits(obs, sig(200, "html"))
        assert lifted.has_trait("broadcast-postmsgs")
        assert lifted.trait("broadcast-postmsgs") == ()

    def test_script_probe_lifts_js_facts(self):
        obs = DynamicObservation(
            url="u", state_id="s", browser_id="chrome", inclusion_method="script",
            js_error_count=2, readable_objects=("echoErrorTotal",),
        )
        lifted = lift_traits(obs, sig(200, "javascript"))
        assert lifted.trait("js-error-count") == 2
        assert lifted.trait("readable-objects") == ("echoErrorTotal",)

    def test_media_probe_lifts_duration_and_dims(self):
        obs = DynamicObservation(
            url="u", state_id="s", browser_id="chrome", inclusion_method="video",
            properties=(("videoWidth", 8), ("videoHeight", 6), ("duration", 1.5)),
        )
        lifted = lift_traits(obs, sig(200, "video"))
        assert lifted.trait("video") == (8, 6, 1.5)
        assert lifted.trait("audio") == (1.5,)

    def test_monotone_never_overwrites(self):
        base = sig(200, "html", traits=(("frame-count", 5),))
        obs = DynamicObservation(
            url="u", state_id="s", browser_id="chrome", inclusion_method="iframe",
            properties=(("contentWindow.length", 3),),
        )
        lifted = lift_traits(obs, base)
        assert lifted.trait("frame-count") == 5
        for name, value in base.body_traits:
            assert lifted.trait(name) == value


class TestPlan:
    def _report(self, url, cells):
        from cosiscan.corpus import SdUrlReport

        states = [state for (_, state) in cells]
        partitions = {"chrome": tuple(frozenset({s}) for s in states)}
        return SdUrlReport(
            url=url,
            distinguishable_pairs={frozenset(states): ("chrome",)},
            representative_responses={},
            cells={
                (browser, state): _FakeNorm(signature)
                for (browser, state), signature in cells.items()
            },
            partitions=partitions,
        )

    def test_script_url_gets_js_instrumentation(self, kb):
        cells = {
            ("chrome", "A"): sig(200, "javascript"),
            ("chrome", "B"): sig(200, "javascript"),
        }
        plan = plan_dynamic_collection([self._report("http://t/x.js", cells)], kb)
        tokens = {p.inclusion_method for p in plan.pages}
        assert "script" in tokens
        script_page = next(p for p in plan.pages if p.inclusion_method == "script")
        assert "js-error" in script_page.instrumentation
        assert "js-object-read" in script_page.instrumentation

    def test_html_url_gets_frame_and_postmessage_pages(self, kb):
        cells = {
            ("chrome", "A"): sig(200, "html"),
            ("chrome", "B"): sig(200, "html"),
        }
        plan = plan_dynamic_collection([self._report("http://t/page", cells)], kb)
        tokens = {p.inclusion_method for p in plan.pages}
        assert "iframe" in tokens and "window-open" in tokens

    def test_image_pair_gets_only_video_probe(self, kb):
        # The video-dimension class deliberately has no content-type
        # constraint (side B may be "not video"), so it probes image pairs;
        # nothing document-based should.
        cells = {
            ("chrome", "A"): sig(200, "image"),
            ("chrome", "B"): sig(404, "image"),
        }
        plan = plan_dynamic_collection([self._report("http://t/i.png", cells)], kb)
        tokens = {p.inclusion_method for p in plan.pages}
        assert tokens == {"video"}

    def test_no_dynamic_candidates_empty_plan(self, kb):
        cells = {
            ("chrome", "A"): sig(999, "image"),
            ("chrome", "B"): sig(998, "image"),
        }
        plan = plan_dynamic_collection([self._report("http://t/i.png", cells)], kb)
        assert plan.pages == []

    def test_page_count_bounded_by_urls_times_methods(self, kb):
        dynamic_methods = {
            m.token for c in kb.classes if c.kind == "dynamic" for m in c.inclusion_methods
        }
        reports = [
            self._report(f"http://t/page{i}", {
                ("chrome", "A"): sig(200, "html"),
                ("chrome", "B"): sig(200, "html"),
            })
            for i in range(3)
        ]
        plan = plan_dynamic_collection(reports, kb)
        assert len(plan.pages) <= len(reports) * len(dynamic_methods)
        # Pages deduplicate on (url, method).
        assert len({(p.url, p.inclusion_method) for p in plan.pages}) == len(plan.pages)

    def test_one_visit_per_equivalence_class(self, kb):
        from cosiscan.corpus import SdUrlReport

        report = SdUrlReport(
            url="http://t/page",
            distinguishable_pairs={frozenset({"A", "C"}): ("chrome",)},
            representative_responses={},
            cells={
                ("chrome", "A"): _FakeNorm(sig(200, "html")),
                ("chrome", "B"): _FakeNorm(sig(200, "html")),
                ("chrome", "C"): _FakeNorm(sig(200, "html", xcto=True)),
            },
            partitions={"chrome": (frozenset({"A", "B"}), frozenset({"C"}))},
        )
        plan = plan_dynamic_collection([report], kb)
        # A and B share a class: only one of them is visited.
        assert sorted(plan.states_to_visit) == ["A", "C"]


class _FakeNorm:
    def __init__(self, signature: ResponseSignature):
        self.signature = signature
