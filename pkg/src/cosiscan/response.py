"""HTTP response model: raw captures, signature features, normalization.

A captured response is reduced in two independent ways:

  * ``signature_of`` extracts the header-level feature vector that leak-class
    predicates are written against (status class, content-type family,
    X-Content-Type-Options, X-Frame-Options, Content-Disposition, redirect
    target origin) plus the body traits that can be read without rendering
    (image dimensions, PDF/CSS/HTML sniffs, statically included URLs).
  * ``normalize`` masks volatile content (date headers, CSRF-like tokens,
    timestamps) so two captures of the same server state compare equal.

``responses_equivalent`` is the similarity function used for state-dependent
URL detection: byte equality of the canonical (signature, masked body) form.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass
from importlib import resources
from urllib.parse import urljoin, urlsplit

SC_CLASSES = ("2xx", "3xx", "4xx", "5xx", "nonstd")

CT_FAMILIES = (
    "javascript",
    "css",
    "html",
    "json",
    "pdf",
    "image",
    "audio",
    "video",
    "webvtt",
    "other",
    "absent",
)

REDIRECT_ORIGINS = ("none", "same-origin", "cross-origin")

# Body traits computable without a renderer. Everything else (frame counts,
# postMessages, JS errors, readable objects, media metrics, css rules) comes
# in through dynamic observations; see cosiscan.dynamic.
STATIC_TRAITS = frozenset({"css-like", "html", "pdf", "image", "included-urls"})
RENDER_TRAITS = frozenset(
    {
        "frame-count",
        "js-error-count",
        "readable-objects",
        "broadcast-postmsgs",
        "video",
        "audio",
        "css-rules",
    }
)
ALL_TRAITS = STATIC_TRAITS | RENDER_TRAITS

_MEDIA_TYPE_FAMILIES = {
    "text/javascript": "javascript",
    "application/javascript": "javascript",
    "application/x-javascript": "javascript",
    "text/ecmascript": "javascript",
    "application/ecmascript": "javascript",
    "text/css": "css",
    "text/html": "html",
    "application/xhtml+xml": "html",
    "application/json": "json",
    "text/json": "json",
    "application/pdf": "pdf",
    "text/vtt": "webvtt",
}

_DEFAULT_PORTS = {"http": "80", "https": "443"}


class ResponseModelError(ValueError):
    """Raised for unusable inputs (malformed URLs, bad rule files)."""


def origin_of(url: str) -> str:
    """Normalized scheme://host:port origin of a URL."""
    parts = urlsplit(url)
    if not parts.scheme or not parts.hostname:
        raise ResponseModelError(f"cannot derive an origin from {url!r}")
    scheme = parts.scheme.lower()
    host = parts.hostname.lower()
    port = parts.port
    if port is None:
        port = _DEFAULT_PORTS.get(scheme, "")
    return f"{scheme}://{host}:{port}"


@dataclass(frozen=True)
class HttpResponse:
    """One captured HTTP exchange.

    ``status``/``headers``/``body`` describe the first hop of the exchange:
    when a redirect was followed, ``redirect_chain`` lists the (status,
    location) hops taken and ``final_url`` is where the chain ended. Header
    names compare case-insensitively; duplicates are preserved in order.
    """

    status: int
    headers: tuple[tuple[str, str], ...]
    body: bytes
    request_url: str
    final_url: str = ""
    redirect_chain: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        if not 100 <= self.status <= 999:
            raise ResponseModelError(f"status {self.status} outside [100, 999]")
        object.__setattr__(self, "headers", tuple((str(n), str(v)) for n, v in self.headers))
        if not self.final_url:
            object.__setattr__(self, "final_url", self.request_url)

    def header_values(self, name: str) -> list[str]:
        wanted = name.lower()
        return [v for n, v in self.headers if n.lower() == wanted]

    def first_header(self, name: str) -> str | None:
        values = self.header_values(name)
        return values[0] if values else None


def sc_class_of(status: int) -> str:
    """Status class; 1xx and anything outside 100-599 count as non-standard."""
    if 200 <= status <= 299:
        return "2xx"
    if 300 <= status <= 399:
        return "3xx"
    if 400 <= status <= 499:
        return "4xx"
    if 500 <= status <= 599:
        return "5xx"
    return "nonstd"


def ct_family_of(content_type: str | None) -> str:
    """Family of a declared Content-Type, parameters stripped. No sniffing."""
    if content_type is None:
        return "absent"
    media_type = content_type.split(";", 1)[0].strip().lower()
    if media_type in _MEDIA_TYPE_FAMILIES:
        return _MEDIA_TYPE_FAMILIES[media_type]
    if media_type.endswith("+json"):
        return "json"
    primary = media_type.split("/", 1)[0]
    if primary in ("image", "audio", "video"):
        return primary
    return "other"


# --------------------------------------------------------------------------
# Static body traits
# --------------------------------------------------------------------------

_HTML_SNIFF_RE = re.compile(
    rb"(?i)<\s*(?:!doctype|html|head|body|title|meta|div|p|iframe|frame|script|img|a)\b"
)
_CSS_RULE_RE = re.compile(rb"[^{}<>]+\{[^{}]*:[^{}]*\}")
_INCLUDED_URL_RE = re.compile(rb"""(?:src|href|action|data)\s*=\s*["']([^"'\s]+)["']""")


def _png_dimensions(body: bytes) -> tuple[int, int] | None:
    if body[:8] != b"\x89PNG\r\n\x1a\n" or len(body) < 24 or body[12:16] != b"IHDR":
        return None
    width, height = struct.unpack(">II", body[16:24])
    return width, height


def _gif_dimensions(body: bytes) -> tuple[int, int] | None:
    if body[:6] not in (b"GIF87a", b"GIF89a") or len(body) < 10:
        return None
    width, height = struct.unpack("<HH", body[6:10])
    return width, height


def _jpeg_dimensions(body: bytes) -> tuple[int, int] | None:
    if body[:2] != b"\xff\xd8":
        return None
    offset = 2
    while offset + 9 < len(body):
        if body[offset] != 0xFF:
            return None
        marker = body[offset + 1]
        if marker in (0xC0, 0xC1, 0xC2, 0xC3):
            height, width = struct.unpack(">HH", body[offset + 5 : offset + 9])
            return width, height
        if marker == 0xD8 or 0xD0 <= marker <= 0xD7:
            offset += 2
            continue
        (length,) = struct.unpack(">H", body[offset + 2 : offset + 4])
        offset += 2 + length
    return None


def image_dimensions(body: bytes) -> tuple[int, int] | None:
    """Width/height parsed from PNG, GIF, or JPEG headers, else None."""
    for parser in (_png_dimensions, _gif_dimensions, _jpeg_dimensions):
        dims = parser(body)
        if dims is not None:
            return dims
    return None


def static_body_traits(body: bytes) -> dict[str, object]:
    """Traits readable straight from the body bytes."""
    traits: dict[str, object] = {}
    if not body:
        return traits
    dims = image_dimensions(body)
    if dims is not None:
        traits["image"] = dims
        return traits
    if body.startswith(b"%PDF-"):
        traits["pdf"] = True
        return traits
    if _HTML_SNIFF_RE.search(body):
        traits["html"] = True
        urls = sorted({m.group(1).decode("latin-1") for m in _INCLUDED_URL_RE.finditer(body)})
        traits["included-urls"] = tuple(urls)
    elif b"<" not in body and _CSS_RULE_RE.search(body):
        traits["css-like"] = True
    return traits


def _canonical_trait_value(name: str, value: object) -> object:
    if name in ("image",):
        w, h = value  # type: ignore[misc]
        return (int(w), int(h))
    if name == "video":
        w, h, duration = value  # type: ignore[misc]
        return (int(w), int(h), float(duration))
    if name == "audio":
        return (float(value[0] if isinstance(value, (tuple, list)) else value),)
    if name in ("frame-count", "js-error-count"):
        n = int(value)  # type: ignore[arg-type]
        if n < 0:
            raise ResponseModelError(f"trait {name} must be non-negative, got {n}")
        return n
    if name in ("readable-objects", "included-urls"):
        return tuple(sorted(str(v) for v in value))  # type: ignore[union-attr]
    if name == "broadcast-postmsgs":
        return tuple((str(o), str(d)) for o, d in value)  # type: ignore[union-attr]
    if name == "css-rules":
        return tuple(sorted(tuple(str(p) for p in entry) for entry in value))  # type: ignore[union-attr]
    return value


@dataclass(frozen=True)
class ResponseSignature:
    """Header-level feature vector plus body traits, as predicates see it."""

    sc: int
    sc_class: str
    ct_family: str
    xcto_nosniff: bool
    xfo_enabled: bool
    cd_attachment: bool
    redirect_target_origin: str
    body_traits: tuple[tuple[str, object], ...] = ()

    def __post_init__(self) -> None:
        if self.sc_class != sc_class_of(self.sc):
            raise ResponseModelError(f"sc_class {self.sc_class!r} inconsistent with sc={self.sc}")
        if self.ct_family not in CT_FAMILIES:
            raise ResponseModelError(f"unknown ct_family {self.ct_family!r}")
        if self.redirect_target_origin not in REDIRECT_ORIGINS:
            raise ResponseModelError(f"unknown redirect origin {self.redirect_target_origin!r}")
        if (self.redirect_target_origin == "none") != (self.sc_class != "3xx"):
            raise ResponseModelError("redirect_target_origin must be none iff non-3xx")
        canonical = []
        for name, value in sorted(dict(self.body_traits).items()):
            if name not in ALL_TRAITS:
                raise ResponseModelError(f"unknown body trait {name!r}")
            canonical.append((name, _canonical_trait_value(name, value)))
        object.__setattr__(self, "body_traits", tuple(canonical))

    def trait(self, name: str) -> object | None:
        for key, value in self.body_traits:
            if key == name:
                return value
        return None

    def has_trait(self, name: str) -> bool:
        return any(key == name for key, _ in self.body_traits)

    def with_traits(self, extra: dict[str, object]) -> "ResponseSignature":
        """Copy of this signature with ``extra`` traits added.

        Existing traits are never overwritten (monotone enrichment).
        """
        merged = dict(self.body_traits)
        for name, value in extra.items():
            merged.setdefault(name, value)
        return ResponseSignature(
            sc=self.sc,
            sc_class=self.sc_class,
            ct_family=self.ct_family,
            xcto_nosniff=self.xcto_nosniff,
            xfo_enabled=self.xfo_enabled,
            cd_attachment=self.cd_attachment,
            redirect_target_origin=self.redirect_target_origin,
            body_traits=tuple(merged.items()),
        )

    def canonical(self) -> str:
        """Stable text form, used for digests and serialization."""
        return json.dumps(
            {
                "sc": self.sc,
                "sc_class": self.sc_class,
                "ct_family": self.ct_family,
                "xcto_nosniff": self.xcto_nosniff,
                "xfo_enabled": self.xfo_enabled,
                "cd_attachment": self.cd_attachment,
                "redirect_target_origin": self.redirect_target_origin,
                "body_traits": [[n, list(v) if isinstance(v, tuple) else v] for n, v in self.body_traits],
            },
            sort_keys=True,
            separators=(",", ":"),
            default=list,
        )


def signature_of(resp: HttpResponse) -> ResponseSignature:
    """Reduce a response to its signature. Total and deterministic."""
    sc_class = sc_class_of(resp.status)
    xcto = any(v.strip().lower() == "nosniff" for v in resp.header_values("X-Content-Type-Options"))
    xfo = bool(resp.header_values("X-Frame-Options"))
    cd = resp.first_header("Content-Disposition")
    cd_attachment = bool(cd) and cd.split(";", 1)[0].strip().lower() == "attachment"

    redirect_origin = "none"
    if sc_class == "3xx":
        location = resp.first_header("Location")
        if location is None:
            # A 3xx that navigates nowhere stays on the requesting origin.
            redirect_origin = "same-origin"
        else:
            target = urljoin(resp.request_url, location)
            redirect_origin = (
                "same-origin" if origin_of(target) == origin_of(resp.request_url) else "cross-origin"
            )

    return ResponseSignature(
        sc=resp.status,
        sc_class=sc_class,
        ct_family=ct_family_of(resp.first_header("Content-Type")),
        xcto_nosniff=xcto,
        xfo_enabled=xfo,
        cd_attachment=cd_attachment,
        redirect_target_origin=redirect_origin,
        body_traits=tuple(static_body_traits(resp.body).items()),
    )


# --------------------------------------------------------------------------
# Normalization
# --------------------------------------------------------------------------

MASK_BYTE = b"*"

MASK_REASONS = (
    "date-header",
    "csrf-token",
    "session-token",
    "nonce",
    "timestamp",
    "other-dynamic",
)


@dataclass(frozen=True)
class NormalizationRules:
    """Masking configuration: volatile header names plus body regexes.

    Each body pattern masks its first capture group when one exists,
    otherwise the whole match. Patterns run over a latin-1 decode of the
    body so offsets map 1:1 onto bytes.
    """

    masked_headers: frozenset[str]
    body_patterns: tuple[tuple[re.Pattern[str], str], ...]

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalizationRules":
        try:
            headers = frozenset(str(h).lower() for h in doc["masked_headers"])
            patterns = []
            for entry in doc["body_patterns"]:
                reason = str(entry["reason"])
                if reason not in MASK_REASONS:
                    raise ResponseModelError(f"unknown mask reason {reason!r}")
                patterns.append((re.compile(entry["regex"]), reason))
        except (KeyError, TypeError) as exc:
            raise ResponseModelError(f"malformed normalization rules: {exc}") from exc
        except re.error as exc:
            raise ResponseModelError(f"bad rule regex: {exc}") from exc
        return cls(masked_headers=headers, body_patterns=tuple(patterns))

    @classmethod
    def from_file(cls, path: str) -> "NormalizationRules":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> "NormalizationRules":
        data = resources.files("cosiscan").joinpath("rules/default-normalization.json")
        return cls.from_dict(json.loads(data.read_text(encoding="utf-8")))


@dataclass(frozen=True)
class NormalizedResponse:
    signature: ResponseSignature
    normalized_body: bytes
    normalized_headers: tuple[tuple[str, str], ...]
    masked_regions: tuple[tuple[int, int, str], ...]

    def digest_material(self) -> bytes:
        return self.signature.canonical().encode() + b"\x00" + self.normalized_body


def _mask_regions(text: str, patterns: tuple[tuple[re.Pattern[str], str], ...]) -> list[tuple[int, int, str]]:
    raw: list[tuple[int, int, str]] = []
    for pattern, reason in patterns:
        for match in pattern.finditer(text):
            start, end = match.span(1) if match.lastindex else match.span()
            if end > start:
                raw.append((start, end, reason))
    raw.sort(key=lambda r: (r[0], -r[1]))
    merged: list[tuple[int, int, str]] = []
    for start, end, reason in raw:
        if merged and start < merged[-1][1]:
            prev_start, prev_end, prev_reason = merged[-1]
            merged[-1] = (prev_start, max(prev_end, end), prev_reason)
        else:
            merged.append((start, end, reason))
    return merged


def normalize(resp: HttpResponse, rules: NormalizationRules) -> NormalizedResponse:
    """Mask volatile regions; idempotent under re-application."""
    signature = signature_of(resp)

    body = resp.body
    regions: list[tuple[int, int, str]] = []
    # Binary payloads (anything with a NUL byte) are left untouched: token
    # patterns matching inside compressed data would corrupt the bytes the
    # signature traits were derived from.
    if body and b"\x00" not in body:
        text = body.decode("latin-1")
        spans = _mask_regions(text, rules.body_patterns)
        if spans:
            out = bytearray(body)
            for start, end, reason in spans:
                out[start:end] = MASK_BYTE * (end - start)
                regions.append((start, end - start, reason))
            body = bytes(out)

    headers = tuple(
        (name, "*" if name.lower() in rules.masked_headers else value)
        for name, value in resp.headers
    )
    return NormalizedResponse(
        signature=signature,
        normalized_body=body,
        normalized_headers=headers,
        masked_regions=tuple(regions),
    )


def responses_equivalent(a: HttpResponse, b: HttpResponse, rules: NormalizationRules) -> bool:
    """True iff the canonical forms coincide: same signature, same masked body."""
    na, nb = normalize(a, rules), normalize(b, rules)
    return na.signature == nb.signature and na.normalized_body == nb.normalized_body
