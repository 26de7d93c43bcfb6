"""Live response collection: one paced fetch per (url, state, browser) cell.

Browser identity is simulated with the User-Agent header only; engine-level
differences have to come from an ingested corpus recorded with real
browsers. Redirects are followed by hand (up to ``HOP_LIMIT``) so the first
hop's status, headers, and body are what gets stored, with the chain and
final URL alongside.
"""

from __future__ import annotations

import threading
import time
from urllib.parse import urljoin

import requests

from .browsers import USER_AGENTS
from .corpus import Corpus, CorpusError, FetchFailure, ScanInputError, StateDefinition, in_scope
from .response import HttpResponse

HOP_LIMIT = 10
RETRIES_PER_CELL = 1
REQUEST_TIMEOUT = 15.0


class CollectError(RuntimeError):
    """The whole collection failed (every cell errored)."""


class RateLimiter:
    """Global pacing: successive acquisitions are at least 1/rps apart."""

    def __init__(self, requests_per_second: float):
        if requests_per_second <= 0:
            raise ScanInputError("pacing must be > 0 requests per second")
        self._interval = 1.0 / requests_per_second
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next_at - now
            if wait > 0:
                time.sleep(wait)
                now = time.monotonic()
            self._next_at = now + self._interval


def fetch_url(
    url: str,
    headers: dict[str, str],
    session: requests.Session | None = None,
    timeout: float = REQUEST_TIMEOUT,
    limiter: RateLimiter | None = None,
) -> HttpResponse:
    """Fetch one URL, following redirects manually and keeping the first hop."""
    sess = session or requests.Session()
    request_headers = {"Accept-Encoding": "identity", **headers}

    if limiter:
        limiter.acquire()
    first = sess.get(url, headers=request_headers, allow_redirects=False, timeout=timeout)
    first_headers = tuple(first.raw.headers.items())
    first_body = first.content

    chain: list[tuple[int, str]] = []
    current = first
    current_url = url
    hops = 0
    while 300 <= current.status_code <= 399 and hops < HOP_LIMIT:
        location = current.headers.get("Location")
        if location is None:
            break
        next_url = urljoin(current_url, location)
        chain.append((current.status_code, next_url))
        current_url = next_url
        hops += 1
        if limiter:
            limiter.acquire()
        try:
            current = sess.get(
                next_url, headers=request_headers, allow_redirects=False, timeout=timeout
            )
        except requests.RequestException:
            # The redirect target is recorded in the chain even when it is
            # unreachable; the first hop is what the capture describes.
            break

    return HttpResponse(
        status=first.status_code,
        headers=first_headers,
        body=first_body,
        request_url=url,
        final_url=current_url,
        redirect_chain=tuple(chain),
    )


def collect_live(
    url_list: list[str],
    states: list[StateDefinition],
    browsers: tuple[str, ...],
    pacing: float,
    target_origin: str,
    timeout: float = REQUEST_TIMEOUT,
    follow_redirects: bool = True,
) -> Corpus:
    """Fetch every URL once per (state, browser); failures become explicit cells."""
    baselines = [s for s in states if s.is_baseline]
    if len(baselines) > 1:
        raise ScanInputError(
            f"at most one logged-out baseline state allowed, got {[s.state_id for s in baselines]}"
        )
    unknown_ua = set(browsers) - set(USER_AGENTS)
    if unknown_ua:
        raise ScanInputError(f"no User-Agent known for browsers {sorted(unknown_ua)}")

    limiter = RateLimiter(pacing)
    corpus = Corpus(target_origin=target_origin, states=tuple(states), browsers=tuple(browsers))
    failures = 0
    total = 0

    for state in states:
        for browser in browsers:
            # One session per (state, browser) keeps cells of a session serial.
            session = requests.Session()
            headers = {"User-Agent": USER_AGENTS[browser]}
            if state.auth_material:
                headers.update(dict(state.auth_material))
            for url in url_list:
                total += 1
                value: HttpResponse | FetchFailure | None = None
                for attempt in range(1 + RETRIES_PER_CELL):
                    try:
                        resp = fetch_url(
                            url, headers, session=session, timeout=timeout, limiter=limiter
                        )
                    except requests.RequestException as exc:
                        value = FetchFailure(error=str(exc))
                        continue
                    value = resp
                    break
                if isinstance(value, FetchFailure):
                    failures += 1
                else:
                    chain_urls = [loc for _, loc in value.redirect_chain]
                    if not in_scope(url, target_origin, chain_urls):
                        # Analyst-supplied URL that never touches the target
                        # site: record nothing rather than pollute the corpus.
                        total -= 1
                        continue
                try:
                    corpus.add(url, state.state_id, browser, value)
                except CorpusError:
                    raise
    if total and failures == total:
        raise CollectError(f"all {total} fetches failed; target unreachable?")
    return corpus
