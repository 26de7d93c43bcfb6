"""Shared fixtures: a running echo server and quick response builders."""

from __future__ import annotations

import pytest

from cosiscan.corpus import Corpus, StateDefinition
from cosiscan.kb import default_kb
from cosiscan.response import HttpResponse, NormalizationRules
from cosiscan.testtarget import EchoServer, load_scenario

TARGET = "http://target.example:80"


def make_response(
    status=200,
    content_type="text/html",
    body=b"<!DOCTYPE html><html><body><p>x</p></body></html>",
    xcto=False,
    xfo=False,
    cd=False,
    location=None,
    url=TARGET + "/page",
    extra_headers=(),
) -> HttpResponse:
    headers = []
    if content_type is not None:
        headers.append(("Content-Type", content_type))
    if xcto:
        headers.append(("X-Content-Type-Options", "nosniff"))
    if xfo:
        headers.append(("X-Frame-Options", "DENY"))
    if cd:
        headers.append(("Content-Disposition", "attachment"))
    if location is not None:
        headers.append(("Location", location))
    headers.extend(extra_headers)
    return HttpResponse(status=status, headers=tuple(headers), body=body, request_url=url)


HOTCRP_BODIES = {
    "pdffx": None,  # image body comes from the scenario template
    "api": b"<!DOCTYPE html><html><head><title>review</title></head><body><p>review form</p></body></html>",
    "offline": b"<!DOCTYPE html><html><head><title>offline</title></head><body><p>offline form</p></body></html>",
}


def hotcrp_corpus(browsers=("chrome", "firefox", "edge")) -> Corpus:
    """The three-URL walkthrough corpus, built directly (no HTTP)."""
    from cosiscan.testtarget import render_body_template

    states = (
        StateDefinition("R1", "Reviewer1"),
        StateDefinition("R2", "Reviewer2"),
        StateDefinition("LO", "Logged out"),
    )
    corpus = Corpus(target_origin=TARGET, states=states, browsers=tuple(browsers))
    png = render_body_template("image(12,8)")
    url_png = TARGET + "/testconf/images/pdffx.png"
    url_api = TARGET + "/testconf/api.php/review?p=1"
    url_off = TARGET + "/testconf/offline.php?downloadForm=1"
    for browser in browsers:
        for state in ("R1", "R2", "LO"):
            corpus.add(
                url_png, state, browser,
                make_response(200, "image/png", body=png, url=url_png),
            )
        corpus.add(url_api, "R1", browser,
                   make_response(200, "text/html", HOTCRP_BODIES["api"], xcto=True, url=url_api))
        corpus.add(url_api, "R2", browser,
                   make_response(403, "text/html", HOTCRP_BODIES["api"], url=url_api))
        corpus.add(url_api, "LO", browser,
                   make_response(200, "text/html", HOTCRP_BODIES["api"], url=url_api))
        corpus.add(url_off, "R1", browser,
                   make_response(200, "text/html", HOTCRP_BODIES["offline"], xcto=True, url=url_off))
        corpus.add(url_off, "R2", browser,
                   make_response(200, "text/html", HOTCRP_BODIES["offline"], xcto=True, url=url_off))
        corpus.add(url_off, "LO", browser,
                   make_response(200, "text/html", HOTCRP_BODIES["offline"], url=url_off))
    return corpus


@pytest.fixture(scope="session")
def rules() -> NormalizationRules:
    return NormalizationRules.default()


@pytest.fixture(scope="session")
def kb():
    return default_kb()


@pytest.fixture(scope="session")
def echo_server():
    server = EchoServer().start()
    yield server
    server.stop()


@pytest.fixture(scope="session")
def hotcrp_server():
    server = EchoServer(scenario=load_scenario("hotcrp-table3")).start()
    yield server
    server.stop()
