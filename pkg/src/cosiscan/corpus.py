"""Per-state, per-browser response corpus and state-dependent URL detection.

A corpus maps (url, state, browser) cells to captured responses. Cells that
could not be fetched are kept as explicit failures so analysis can tell
"missing" apart from "never collected". ``find_sd_urls`` partitions the
states of each URL into normalized-response equivalence classes per browser
and reports the URLs where at least two classes exist.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from urllib.parse import urlsplit

from .browsers import ALL_BROWSERS
from .response import (
    HttpResponse,
    NormalizationRules,
    NormalizedResponse,
    ResponseModelError,
    normalize,
    origin_of,
)


class CorpusError(ValueError):
    """Malformed corpus documents, duplicate cells, scope violations."""


class ScanInputError(ValueError):
    """Unusable analyst input (bad URL, unknown state, ...)."""


@dataclass(frozen=True)
class StateDefinition:
    """A named visitor state; ``auth_material`` holds the request headers
    (Cookie, Authorization, ...) that load the state, absent for the
    logged-out baseline."""

    state_id: str
    description: str = ""
    auth_material: tuple[tuple[str, str], ...] | None = None

    @property
    def is_baseline(self) -> bool:
        return self.auth_material is None


@dataclass(frozen=True)
class FetchFailure:
    error: str


@dataclass
class Corpus:
    target_origin: str
    states: tuple[StateDefinition, ...]
    browsers: tuple[str, ...]
    entries: dict[tuple[str, str, str], HttpResponse | FetchFailure] = field(default_factory=dict)

    def __post_init__(self) -> None:
        ids = [s.state_id for s in self.states]
        if len(set(ids)) != len(ids):
            raise CorpusError("duplicate state_id in corpus states")
        unknown = set(self.browsers) - set(ALL_BROWSERS)
        if unknown:
            raise CorpusError(f"unknown browsers: {sorted(unknown)}")

    @property
    def state_ids(self) -> tuple[str, ...]:
        return tuple(s.state_id for s in self.states)

    @property
    def urls(self) -> tuple[str, ...]:
        return tuple(sorted({url for url, _, _ in self.entries}))

    def response(self, url: str, state_id: str, browser_id: str) -> HttpResponse | FetchFailure | None:
        return self.entries.get((url, state_id, browser_id))

    def add(self, url: str, state_id: str, browser_id: str, value: HttpResponse | FetchFailure) -> None:
        key = (url, state_id, browser_id)
        if key in self.entries:
            raise CorpusError(f"duplicate corpus cell {key}")
        self.entries[key] = value


def _host_in_scope(host: str | None, target_host: str) -> bool:
    if not host:
        return False
    host = host.lower()
    return host == target_host or host.endswith("." + target_host)


def in_scope(url: str, target_origin: str, redirect_chain: tuple[str, ...] | list[str] = ()) -> bool:
    """A URL is in scope when it, or anything on its redirect chain, is
    hosted at the target domain (subdomains included)."""
    target_host = urlsplit(target_origin).hostname
    if target_host is None:
        raise ScanInputError(f"target origin {target_origin!r} has no host")
    target_host = target_host.lower()
    candidates = [url, *redirect_chain]
    for candidate in candidates:
        parts = urlsplit(candidate)
        if parts.scheme and not parts.hostname:
            raise ScanInputError(f"unparseable URL {candidate!r}")
        if not parts.scheme and not parts.hostname:
            # Relative reference: same host as the target by construction.
            return True
        if _host_in_scope(parts.hostname, target_host):
            return True
    return False


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _entry_to_dict(key: tuple[str, str, str], value: HttpResponse | FetchFailure) -> dict:
    url, state_id, browser_id = key
    record: dict = {"url": url, "state_id": state_id, "browser_id": browser_id}
    if isinstance(value, FetchFailure):
        record["fetch_error"] = value.error
        return record
    record.update(
        {
            "status": value.status,
            "headers": [[n, v] for n, v in value.headers],
            "body_b64": base64.b64encode(value.body).decode("ascii"),
            "final_url": value.final_url,
            "redirect_chain": [[status, loc] for status, loc in value.redirect_chain],
        }
    )
    return record


def export_corpus(corpus: Corpus) -> dict:
    """Canonical document form: entries sorted by (url, state, browser)."""
    return {
        "target_origin": corpus.target_origin,
        "states": [
            {"state_id": s.state_id, "description": s.description} for s in corpus.states
        ],
        "browsers": list(corpus.browsers),
        "entries": [
            _entry_to_dict(key, corpus.entries[key]) for key in sorted(corpus.entries)
        ],
    }


def save_corpus(corpus: Corpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(export_corpus(corpus), fh, indent=2, sort_keys=True)
        fh.write("\n")


def ingest_corpus(doc: dict) -> Corpus:
    """Load a recorded-responses document; duplicate cells are conflicts."""
    try:
        target_origin = origin_of(doc["target_origin"])
        states = tuple(
            StateDefinition(state_id=s["state_id"], description=s.get("description", ""))
            for s in doc["states"]
        )
        browsers = tuple(doc["browsers"])
        records = doc["entries"]
    except (KeyError, TypeError, ResponseModelError) as exc:
        raise CorpusError(f"malformed corpus document: {exc}") from exc

    corpus = Corpus(target_origin=target_origin, states=states, browsers=browsers)
    known_states = set(corpus.state_ids)
    for index, record in enumerate(records):
        try:
            url = record["url"]
            state_id = record["state_id"]
            browser_id = record["browser_id"]
            if state_id not in known_states:
                raise CorpusError(f"unknown state {state_id!r}")
            if browser_id not in browsers:
                raise CorpusError(f"unknown browser {browser_id!r}")
            if "fetch_error" in record:
                value: HttpResponse | FetchFailure = FetchFailure(error=str(record["fetch_error"]))
            else:
                chain = tuple((int(s), str(l)) for s, l in record.get("redirect_chain", []))
                value = HttpResponse(
                    status=int(record["status"]),
                    headers=tuple((n, v) for n, v in record["headers"]),
                    body=base64.b64decode(record["body_b64"]),
                    request_url=url,
                    final_url=record.get("final_url", url),
                    redirect_chain=chain,
                )
                chain_urls = [loc for _, loc in chain]
                if not in_scope(url, target_origin, chain_urls):
                    raise CorpusError(f"url {url!r} out of scope for {target_origin}")
        except CorpusError as exc:
            raise CorpusError(f"entry {index}: {exc}") from exc
        except (KeyError, TypeError, ValueError, ResponseModelError) as exc:
            raise CorpusError(f"entry {index}: malformed record: {exc}") from exc
        try:
            corpus.add(url, state_id, browser_id, value)
        except CorpusError as exc:
            raise CorpusError(f"entry {index}: {exc}") from exc
    return corpus


def load_corpus(path: str) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        return ingest_corpus(json.load(fh))


def har_entries(har: dict, state_id: str, browser_id: str, target_origin: str) -> list[dict]:
    """Convert a HAR 1.2 archive to corpus entry records.

    Every HAR entry becomes one cell for the supplied state/browser pair;
    out-of-scope URLs are dropped.
    """
    try:
        raw_entries = har["log"]["entries"]
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"not a HAR 1.2 document: {exc}") from exc

    records = []
    for raw in raw_entries:
        try:
            url = raw["request"]["url"]
            response = raw["response"]
            content = response.get("content", {})
            text = content.get("text", "")
            if content.get("encoding") == "base64":
                body = base64.b64decode(text)
            else:
                body = str(text).encode("utf-8")
            headers = [[h["name"], h["value"]] for h in response.get("headers", [])]
            status = int(response["status"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"malformed HAR entry: {exc}") from exc
        if not in_scope(url, target_origin):
            continue
        records.append(
            {
                "url": url,
                "state_id": state_id,
                "browser_id": browser_id,
                "status": status,
                "headers": headers,
                "body_b64": base64.b64encode(body).decode("ascii"),
                "final_url": url,
                "redirect_chain": [],
            }
        )
    return records


# --------------------------------------------------------------------------
# State-dependent URL detection
# --------------------------------------------------------------------------


@dataclass
class SdUrlReport:
    """A URL whose response separates at least two states somewhere.

    ``distinguishable_pairs`` maps each unordered state pair to the browsers
    for which the pair's responses differ. ``representative_responses`` keeps
    one normalized representative per state (first browser that has the
    cell); ``cells`` retains every per-browser normalized response for the
    matching stage.
    """

    url: str
    distinguishable_pairs: dict[frozenset[str], tuple[str, ...]]
    representative_responses: dict[str, NormalizedResponse]
    cells: dict[tuple[str, str], NormalizedResponse]
    partitions: dict[str, tuple[frozenset[str], ...]]


def normalized_digest(norm: NormalizedResponse) -> str:
    return hashlib.sha256(norm.digest_material()).hexdigest()


def find_sd_urls(corpus: Corpus, rules: NormalizationRules) -> list[SdUrlReport]:
    """Equivalence-partition states per URL and browser; report URLs with
    at least two classes. Failed cells are excluded from pairing."""
    state_order = {s: i for i, s in enumerate(corpus.state_ids)}
    reports = []
    for url in corpus.urls:
        cells: dict[tuple[str, str], NormalizedResponse] = {}
        digests: dict[tuple[str, str], str] = {}
        for browser in corpus.browsers:
            for state in corpus.state_ids:
                value = corpus.response(url, state, browser)
                if isinstance(value, HttpResponse):
                    norm = normalize(value, rules)
                    cells[(browser, state)] = norm
                    digests[(browser, state)] = normalized_digest(norm)

        pair_browsers: dict[frozenset[str], list[str]] = {}
        partitions: dict[str, tuple[frozenset[str], ...]] = {}
        for browser in corpus.browsers:
            groups: dict[str, list[str]] = {}
            for state in corpus.state_ids:
                digest = digests.get((browser, state))
                if digest is not None:
                    groups.setdefault(digest, []).append(state)
            classes = tuple(frozenset(members) for members in groups.values())
            partitions[browser] = classes
            if len(classes) < 2:
                continue
            group_list = list(groups.values())
            for i, left in enumerate(group_list):
                for right in group_list[i + 1 :]:
                    for a in left:
                        for b in right:
                            pair_browsers.setdefault(frozenset({a, b}), []).append(browser)

        if not pair_browsers:
            continue

        representatives: dict[str, NormalizedResponse] = {}
        for state in corpus.state_ids:
            for browser in corpus.browsers:
                norm = cells.get((browser, state))
                if norm is not None:
                    representatives[state] = norm
                    break

        ordered_pairs = dict(
            sorted(
                ((pair, tuple(browsers)) for pair, browsers in pair_browsers.items()),
                key=lambda item: sorted(state_order.get(s, 99) for s in item[0]),
            )
        )
        reports.append(
            SdUrlReport(
                url=url,
                distinguishable_pairs=ordered_pairs,
                representative_responses=representatives,
                cells=cells,
                partitions=partitions,
            )
        )
    return reports


def sd_report_to_dict(report: SdUrlReport) -> dict:
    return {
        "url": report.url,
        "pairs": [
            {"states": sorted(pair), "browsers": list(browsers)}
            for pair, browsers in report.distinguishable_pairs.items()
        ],
        "partitions": {
            browser: [sorted(cls) for cls in classes]
            for browser, classes in report.partitions.items()
        },
    }
