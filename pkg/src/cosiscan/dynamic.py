"""Browser-side observations for leak classes that static headers can't decide.

The in-browser harness (shipped separately) loads a URL with a given
inclusion method and records what the page could see: events fired, readable
properties, broadcast postMessages, JS error counts, computed styles.
This module plans which collection pages are worth visiting, ingests the
harness output (JSON lines, one observation per line), and lifts the
observations into response-signature body traits so the regular class
matcher can evaluate dynamic classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from .response import ResponseSignature

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import SdUrlReport
    from .kb import KnowledgeBase

DEFAULT_WINDOW_MS = 6000

APPCACHE_EVENTS = ("cached", "error", "none")


class ObservationError(ValueError):
    """Malformed observation documents."""


# --------------------------------------------------------------------------
# Jaro similarity
# --------------------------------------------------------------------------


def jaro_similarity(s: str, t: str) -> float:
    """Jaro similarity in [0, 1]; 1.0 for identical strings.

    Characters match when equal and within max(|s|,|t|)//2 - 1 positions;
    the score averages the match ratios with the transposition term.
    """
    if s == t:
        return 1.0
    if not s or not t:
        return 0.0

    window = max(len(s), len(t)) // 2 - 1
    s_matched = [False] * len(s)
    t_matched = [False] * len(t)
    matches = 0
    for i, ch in enumerate(s):
        lo = max(0, i - window)
        hi = min(len(t), i + window + 1)
        for j in range(lo, hi):
            if not t_matched[j] and t[j] == ch:
                s_matched[i] = True
                t_matched[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0

    s_seq = [ch for i, ch in enumerate(s) if s_matched[i]]
    t_seq = [ch for j, ch in enumerate(t) if t_matched[j]]
    transpositions = sum(1 for a, b in zip(s_seq, t_seq) if a != b) // 2

    m = float(matches)
    return (m / len(s) + m / len(t) + (m - transpositions) / m) / 3.0


def postmessage_differs(
    a: list[dict],
    b: list[dict],
    threshold: float,
) -> bool:
    """True when two postMessage captures are distinguishable.

    Counts must agree, origin multisets must agree, and every positionally
    aligned payload pair must reach the similarity threshold; otherwise the
    captures differ. Messages are {"origin": ..., "data": ...} dicts.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    if len(a) != len(b):
        return True
    if sorted(m["origin"] for m in a) != sorted(m["origin"] for m in b):
        return True
    for left, right in zip(a, b):
        if jaro_similarity(str(left["data"]), str(right["data"])) < threshold:
            return True
    return False


# --------------------------------------------------------------------------
# Observations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DynamicObservation:
    url: str
    state_id: str
    browser_id: str
    inclusion_method: str
    events: tuple[str, ...] = ()
    properties: tuple[tuple[str, object], ...] = ()
    postmessages: tuple[tuple[str, str], ...] = ()
    js_error_count: int = 0
    readable_objects: tuple[str, ...] = ()
    css_computed: tuple[tuple[str, str, str], ...] = ()
    csp_report_received: bool = False
    appcache_event: str = "none"
    window_ms: int = DEFAULT_WINDOW_MS

    def property(self, name: str) -> object | None:
        for key, value in self.properties:
            if key == name:
                return value
        return None


_NUMERIC_PROPERTIES = (
    "contentWindow.length",
    "frames.length",
    "naturalWidth",
    "naturalHeight",
    "width",
    "height",
    "videoWidth",
    "videoHeight",
    "duration",
)


def observation_from_dict(record: dict, index: int = 0) -> DynamicObservation:
    def fail(message: str) -> ObservationError:
        return ObservationError(f"record {index}: {message}")

    try:
        url = record["url"]
        state_id = record["state_id"]
        browser_id = record["browser_id"]
        inclusion_method = record["inclusion_method"]
    except (KeyError, TypeError) as exc:
        raise fail(f"missing field {exc}") from exc

    properties = []
    for name, value in dict(record.get("properties", {})).items():
        if name in _NUMERIC_PROPERTIES and isinstance(value, (int, float)) and value < 0:
            raise fail(f"property {name} must be non-negative, got {value}")
        properties.append((str(name), value))

    js_errors = int(record.get("js_error_count", 0))
    if js_errors < 0:
        raise fail(f"js_error_count must be non-negative, got {js_errors}")
    window_ms = int(record.get("window_ms", DEFAULT_WINDOW_MS))
    if window_ms <= 0:
        raise fail(f"window_ms must be positive, got {window_ms}")
    appcache = record.get("appcache_event", "none")
    if appcache not in APPCACHE_EVENTS:
        raise fail(f"unknown appcache_event {appcache!r}")

    postmessages = []
    for message in record.get("postmessages", ()):
        try:
            postmessages.append((str(message["origin"]), str(message["data"])))
        except (KeyError, TypeError) as exc:
            raise fail(f"malformed postmessage entry: {exc}") from exc

    css_computed = []
    for selector, props in dict(record.get("css_computed", {})).items():
        for prop, value in dict(props).items():
            css_computed.append((str(selector), str(prop), str(value)))

    return DynamicObservation(
        url=url,
        state_id=state_id,
        browser_id=browser_id,
        inclusion_method=inclusion_method,
        events=tuple(str(e) for e in record.get("events", ())),
        properties=tuple(properties),
        postmessages=tuple(postmessages),
        js_error_count=js_errors,
        readable_objects=tuple(str(o) for o in record.get("readable_objects", ())),
        css_computed=tuple(css_computed),
        csp_report_received=bool(record.get("csp_report_received", False)),
        appcache_event=appcache,
        window_ms=window_ms,
    )


def ingest_observations(text: str) -> list[DynamicObservation]:
    """Parse a JSON-lines observation document; blank lines are skipped."""
    observations = []
    for index, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ObservationError(f"record {index}: not valid JSON: {exc}") from exc
        observations.append(observation_from_dict(record, index))
    return observations


def load_observations(path: str) -> list[DynamicObservation]:
    with open(path, "r", encoding="utf-8") as fh:
        return ingest_observations(fh.read())


# Which traits an observation may vouch for depends on how the URL was
# included: a script probe that saw zero postMessages says nothing about
# what an iframe inclusion would broadcast.
_WINDOWED_TOKENS = ("iframe", "frame", "window-open", "form-iframe")


def lift_traits(obs: DynamicObservation, base: ResponseSignature) -> ResponseSignature:
    """Enrich a signature with traits derived from one observation.

    Never removes or changes traits already on ``base``.
    """
    token = obs.inclusion_method
    extra: dict[str, object] = {}

    frame_count = obs.property("contentWindow.length")
    if frame_count is None:
        frame_count = obs.property("frames.length")
    if frame_count is not None:
        extra["frame-count"] = int(frame_count)  # type: ignore[arg-type]

    if token in _WINDOWED_TOKENS:
        extra["broadcast-postmsgs"] = obs.postmessages
    if token == "script":
        extra["js-error-count"] = obs.js_error_count
        extra["readable-objects"] = obs.readable_objects
    if token == "link-stylesheet":
        extra["css-rules"] = obs.css_computed

    video_w = obs.property("videoWidth")
    video_h = obs.property("videoHeight")
    duration = obs.property("duration")
    if video_w is not None and video_h is not None:
        extra["video"] = (int(video_w), int(video_h), float(duration or 0))  # type: ignore[arg-type]
    if duration is not None:
        extra["audio"] = (float(duration),)  # type: ignore[arg-type]

    return base.with_traits(extra)


def index_observations(
    observations: Iterable[DynamicObservation],
) -> dict[tuple[str, str, str], list[DynamicObservation]]:
    """Group observations by (url, state, browser)."""
    grouped: dict[tuple[str, str, str], list[DynamicObservation]] = {}
    for obs in observations:
        grouped.setdefault((obs.url, obs.state_id, obs.browser_id), []).append(obs)
    return grouped


def lift_all(
    base: ResponseSignature,
    observations: Iterable[DynamicObservation],
) -> ResponseSignature:
    sig = base
    for obs in observations:
        sig = lift_traits(obs, sig)
    return sig


# --------------------------------------------------------------------------
# Collection planning
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CollectionPage:
    page_id: str
    url: str
    inclusion_method: str
    instrumentation: tuple[str, ...]


@dataclass
class CollectionPlan:
    pages: list[CollectionPage] = field(default_factory=list)
    states_to_visit: list[str] = field(default_factory=list)
    browsers_to_visit: list[str] = field(default_factory=list)


def plan_dynamic_collection(sd_reports: list["SdUrlReport"], kb: "KnowledgeBase") -> CollectionPlan:
    """One collection page per (SD-URL, dynamic inclusion method) whose
    header-level atoms some observed response pair already satisfies.

    States inside one normalized-equivalence class are visited once.
    """
    plan = CollectionPlan()
    pages: dict[tuple[str, str], set[str]] = {}
    states: list[str] = []
    browsers: list[str] = []

    for report in sd_reports:
        signatures = {key: norm.signature for key, norm in report.cells.items()}
        for cls in kb.classes:
            if cls.kind != "dynamic":
                continue
            static_a = _header_atoms_only(cls.pred_a)
            static_b = _header_atoms_only(cls.pred_b)
            satisfiable = False
            for (browser_x, state_x), sig_x in signatures.items():
                for (browser_y, state_y), sig_y in signatures.items():
                    if browser_x != browser_y or state_x == state_y:
                        continue
                    if static_a.evaluate(sig_x) and static_b.evaluate(sig_y):
                        satisfiable = True
                        break
                if satisfiable:
                    break
            if not satisfiable:
                continue
            for method in cls.inclusion_methods:
                pages.setdefault((report.url, method.token), set()).add(cls.leak_method)

        # Visit one representative state per equivalence class, per browser.
        for browser, classes in report.partitions.items():
            if browser not in browsers:
                browsers.append(browser)
            for cls_states in classes:
                representative = sorted(cls_states)[0]
                if representative not in states:
                    states.append(representative)

    for (url, token), leaks in sorted(pages.items()):
        page_id = f"collect-{len(plan.pages):03d}"
        plan.pages.append(
            CollectionPage(
                page_id=page_id,
                url=url,
                inclusion_method=token,
                instrumentation=tuple(sorted(leaks)),
            )
        )
    plan.states_to_visit = states
    plan.browsers_to_visit = browsers
    return plan


def _header_atoms_only(pred):
    """View of a predicate with trait atoms dropped (header atoms only)."""
    from .kb import Predicate  # deferred: kb imports this module for jaro

    atoms = tuple(a for a in pred.atoms if a.trait is None)
    return Predicate(atoms=atoms, negate=pred.negate)


def collection_page_html(page: CollectionPage, harness_src: str = "./harness.js") -> str:
    """Collection page shell; the instrumentation script does the work."""
    params = {
        "page_id": page.page_id,
        "url": page.url,
        "inclusion_method": page.inclusion_method,
        "instrumentation": list(page.instrumentation),
    }
    return (
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\"></head><body>\n"
        f"<script id=\"collection-params\" type=\"application/json\">{json.dumps(params)}</script>\n"
        f"<script src=\"{harness_src}\"></script>\n"
        "</body></html>\n"
    )
