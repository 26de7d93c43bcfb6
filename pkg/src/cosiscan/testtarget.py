"""Configurable HTTP echo service used to fixture leak classes end to end.

Any request is answered according to an EchoSpec carried in the query
string (``?sc=404&ct=text/html&body=plain``), so a single server can stand
in for every response shape a class predicate mentions. Named scenarios
overlay fixed multi-URL, multi-state sites on top: the visitor's state is
selected by a request cookie, which is enough to exercise the whole
pipeline without any external site.

The server deliberately sends no Date/Server headers: responses for the
same spec are byte-identical across requests.
"""

from __future__ import annotations

import itertools
import json
import struct
import threading
import time
import zlib
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from urllib.parse import parse_qs, quote, urljoin, urlsplit

from .response import ResponseSignature, ct_family_of, origin_of, sc_class_of, static_body_traits


class EchoSpecError(ValueError):
    """Malformed spec parameters; surfaces as a 400 from the server."""


class EnumerationError(ValueError):
    """Grid larger than the configured cap."""


# --------------------------------------------------------------------------
# Body templates
# --------------------------------------------------------------------------


def _png_bytes(width: int, height: int) -> bytes:
    def chunk(kind: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + kind
            + data
            + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", width, height, 8, 0, 0, 0, 0)  # 8-bit grayscale
    raw = b"".join(b"\x00" + b"\x7f" * width for _ in range(height))
    idat = zlib.compress(raw, 6)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", idat) + chunk(b"IEND", b"")


def _wav_bytes(seconds: float) -> bytes:
    rate = 8000
    samples = max(1, int(rate * seconds))
    data = b"\x80" * samples  # 8-bit silence
    fmt = struct.pack("<HHIIHH", 1, 1, rate, rate, 1, 8)
    body = b"WAVEfmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


def _video_stub(width: int, height: int, seconds: float) -> bytes:
    # Placeholder container: fixture classes that need real playback facts
    # take them from harness observations, not from these bytes.
    marker = f"w={width};h={height};d={seconds}".encode()
    payload = b"\x00\x00\x00\x18ftypmp42\x00\x00\x00\x00mp42isom" + marker
    return payload + b"\x00" * 32


def _pdf_bytes() -> bytes:
    return (
        b"%PDF-1.4\n1 0 obj<</Type/Catalog/Pages 2 0 R>>endobj\n"
        b"2 0 obj<</Type/Pages/Kids[3 0 R]/Count 1>>endobj\n"
        b"3 0 obj<</Type/Page/Parent 2 0 R/MediaBox[0 0 200 200]>>endobj\n"
        b"xref\n0 4\n0000000000 65535 f \ntrailer<</Size 4/Root 1 0 R>>\nstartxref\n9\n%%EOF\n"
    )


def _html_frames(count: int) -> bytes:
    frames = "".join("<iframe></iframe>" for _ in range(count))
    return (
        "<!DOCTYPE html><html><head><title>frames</title></head>"
        f"<body>{frames}</body></html>"
    ).encode()


def _html_postmsg(messages: list[str]) -> bytes:
    payload = json.dumps(messages)
    script = (
        "(function () {"
        "var sink = window.opener || window.parent;"
        f"var msgs = {payload};"
        "for (var i = 0; i < msgs.length; i++) { sink.postMessage(msgs[i], \"*\"); }"
        "})();"
    )
    return (
        "<!DOCTYPE html><html><head><title>broadcast</title></head>"
        f"<body><script>{script}</script></body></html>"
    ).encode()


def _js_with_errors(count: int) -> bytes:
    lines = [f"var echoErrorTotal = {count};"]
    lines.extend(
        'setTimeout(function () { throw new Error("echo-error"); }, 0);' for _ in range(count)
    )
    return ("\n".join(lines) + "\n").encode()


def render_body_template(template: str) -> bytes:
    """Deterministic bytes for a named body template like ``image(5,7)``."""
    name, _, raw_args = template.partition("(")
    name = name.strip()
    args = [a.strip() for a in raw_args.rstrip(")").split(",")] if raw_args else []

    try:
        if name == "plain":
            return b"ok\n"
        if name == "js-clean":
            return b"var echoTargetLoaded = true;\n"
        if name == "js-with-errors":
            return _js_with_errors(int(args[0]))
        if name == "css-rule":
            return f'#echo-marker {{ font-family: "{args[0]}"; margin-left: 7px; }}\n'.encode()
        if name == "html-frames":
            return _html_frames(int(args[0]))
        if name == "html-postmsg":
            return _html_postmsg(args[0].split("|") if args and args[0] else [])
        if name == "image":
            return _png_bytes(int(args[0]), int(args[1]))
        if name == "audio":
            return _wav_bytes(float(args[0]))
        if name == "video":
            return _video_stub(int(args[0]), int(args[1]), float(args[2]))
        if name == "pdf":
            return _pdf_bytes()
    except (IndexError, ValueError) as exc:
        raise EchoSpecError(f"bad arguments for body template {template!r}: {exc}") from exc
    raise EchoSpecError(f"unknown body template {template!r}")


# --------------------------------------------------------------------------
# EchoSpec
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EchoSpec:
    status: int = 200
    content_type: str | None = None
    xcto_nosniff: bool = False
    xfo: str | None = None
    cd_attachment: bool = False
    location: str | None = None
    body_template: str | None = None
    body_raw: bytes | None = None
    delay_ms: int = 0

    def __post_init__(self) -> None:
        if not 100 <= self.status <= 999:
            raise EchoSpecError(f"status {self.status} outside [100, 999]")
        if 100 <= self.status <= 199:
            # Informational responses cannot be served as the final answer
            # to a request; clients skip them and wait forever.
            raise EchoSpecError(f"status {self.status} is not servable as a final response")
        if self.delay_ms < 0:
            raise EchoSpecError("delay_ms must be >= 0")

    @property
    def bodiless(self) -> bool:
        """Statuses that forbid a message body on the wire."""
        return self.status in (204, 304)

    @classmethod
    def from_query(cls, query: str) -> "EchoSpec":
        params = {k: v[-1] for k, v in parse_qs(query, keep_blank_values=True).items()}
        return cls.from_params(params)

    @classmethod
    def from_params(cls, params: dict) -> "EchoSpec":
        try:
            status = int(params.get("sc", 200))
        except ValueError as exc:
            raise EchoSpecError(f"sc must be an integer: {params.get('sc')!r}") from exc
        body_raw = None
        if "body64" in params:
            import base64

            try:
                body_raw = base64.urlsafe_b64decode(params["body64"])
            except (ValueError, TypeError) as exc:
                raise EchoSpecError(f"body64 is not base64: {exc}") from exc
        xcto = params.get("xcto", "")
        if xcto not in ("", "nosniff"):
            raise EchoSpecError(f"xcto must be 'nosniff' or empty, got {xcto!r}")
        xfo = params.get("xfo") or None
        if xfo not in (None, "deny", "sameorigin"):
            raise EchoSpecError(f"xfo must be deny|sameorigin, got {xfo!r}")
        cd = params.get("cd", "")
        if cd not in ("", "attachment"):
            raise EchoSpecError(f"cd must be 'attachment' or empty, got {cd!r}")
        try:
            delay = int(params.get("delay_ms", 0))
        except ValueError as exc:
            raise EchoSpecError("delay_ms must be an integer") from exc
        spec = cls(
            status=status,
            content_type=params.get("ct") or None,
            xcto_nosniff=xcto == "nosniff",
            xfo=xfo,
            cd_attachment=cd == "attachment",
            location=params.get("loc") or None,
            body_template=params.get("body") or None,
            body_raw=body_raw,
            delay_ms=delay,
        )
        if spec.body_template is not None:
            render_body_template(spec.body_template)  # validate early
        return spec

    def body_bytes(self) -> bytes:
        if self.bodiless:
            return b""
        if self.body_raw is not None:
            return self.body_raw
        if self.body_template is not None:
            return render_body_template(self.body_template)
        return b""

    def header_list(self) -> list[tuple[str, str]]:
        headers: list[tuple[str, str]] = []
        if self.content_type is not None:
            headers.append(("Content-Type", self.content_type))
        if self.xcto_nosniff:
            headers.append(("X-Content-Type-Options", "nosniff"))
        if self.xfo is not None:
            headers.append(("X-Frame-Options", self.xfo.upper()))
        if self.cd_attachment:
            headers.append(("Content-Disposition", "attachment"))
        if self.location is not None:
            headers.append(("Location", self.location))
        return headers

    def implied_signature(self, request_url: str) -> ResponseSignature:
        """The signature a faithful echo of this spec must produce."""
        sc_class = sc_class_of(self.status)
        redirect_origin = "none"
        if sc_class == "3xx":
            if self.location is None:
                redirect_origin = "same-origin"
            else:
                target = urljoin(request_url, self.location)
                redirect_origin = (
                    "same-origin"
                    if origin_of(target) == origin_of(request_url)
                    else "cross-origin"
                )
        return ResponseSignature(
            sc=self.status,
            sc_class=sc_class,
            ct_family=ct_family_of(self.content_type),
            xcto_nosniff=self.xcto_nosniff,
            xfo_enabled=self.xfo is not None,
            cd_attachment=self.cd_attachment,
            redirect_target_origin=redirect_origin,
            body_traits=tuple(static_body_traits(self.body_bytes()).items()),
        )

    def to_query(self) -> str:
        parts = []
        parts.append(f"sc={self.status}")
        if self.content_type is not None:
            parts.append(f"ct={quote(self.content_type, safe='')}")
        if self.xcto_nosniff:
            parts.append("xcto=nosniff")
        if self.xfo is not None:
            parts.append(f"xfo={self.xfo}")
        if self.cd_attachment:
            parts.append("cd=attachment")
        if self.location is not None:
            parts.append(f"loc={quote(self.location, safe='')}")
        if self.body_template is not None:
            parts.append(f"body={quote(self.body_template, safe='(),|')}")
        if self.body_raw is not None:
            import base64

            parts.append("body64=" + base64.urlsafe_b64encode(self.body_raw).decode("ascii"))
        if self.delay_ms:
            parts.append(f"delay_ms={self.delay_ms}")
        return "&".join(parts)


# --------------------------------------------------------------------------
# Scenarios
# --------------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    cookie_name: str
    default_state: str
    # (path-with-query) -> state_id -> EchoSpec
    paths: dict[str, dict[str, EchoSpec]]

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        paths: dict[str, dict[str, EchoSpec]] = {}
        for path, states in doc["paths"].items():
            paths[path] = {}
            for state_id, params in states.items():
                raw = dict(params)
                body_text = raw.pop("body_text", None)
                spec = EchoSpec.from_params(raw)
                if body_text is not None:
                    spec = EchoSpec(
                        status=spec.status,
                        content_type=spec.content_type,
                        xcto_nosniff=spec.xcto_nosniff,
                        xfo=spec.xfo,
                        cd_attachment=spec.cd_attachment,
                        location=spec.location,
                        body_raw=body_text.encode(),
                        delay_ms=spec.delay_ms,
                    )
                paths[path][state_id] = spec
        return cls(
            name=doc["name"],
            cookie_name=doc.get("cookie", "state"),
            default_state=doc["default_state"],
            paths=paths,
        )


def load_scenario(name_or_path: str) -> Scenario:
    """Load a shipped scenario by name, or any scenario file by path."""
    shipped = resources.files("cosiscan").joinpath(f"scenarios/{name_or_path}.json")
    try:
        text = shipped.read_text(encoding="utf-8")
    except (FileNotFoundError, NotADirectoryError):
        try:
            with open(name_or_path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except FileNotFoundError:
            available = [
                p.name.removesuffix(".json")
                for p in resources.files("cosiscan").joinpath("scenarios").iterdir()
            ]
            raise EchoSpecError(
                f"unknown scenario {name_or_path!r}; available: {sorted(available)}"
            ) from None
    return Scenario.from_dict(json.loads(text))


# --------------------------------------------------------------------------
# Server
# --------------------------------------------------------------------------

_CAPTCHA_BODY = (
    b"<!DOCTYPE html><html><head><title>Are you human?</title></head>"
    b"<body><p>Too many requests: solve this CAPTCHA.</p></body></html>"
)


class _EchoHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "EchoServer"

    def log_message(self, fmt: str, *args) -> None:  # quiet by default
        if self.server.verbose:
            super().log_message(fmt, *args)

    # Suppress automatic Date/Server headers for byte-stable responses.
    def send_response(self, code: int, message: str | None = None) -> None:
        self.log_request(code)
        self.send_response_only(code, message)

    def _reply(self, status: int, headers: list[tuple[str, str]], body: bytes) -> None:
        self.send_response(status, "Echo")
        for name, value in headers:
            self.send_header(name, value)
        if status in (204, 304):
            self.end_headers()
            return
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _reply_spec(self, spec: EchoSpec) -> None:
        if spec.delay_ms:
            time.sleep(spec.delay_ms / 1000.0)
        self._reply(spec.status, spec.header_list(), spec.body_bytes())

    def _cookie_state(self) -> str:
        header = self.headers.get("Cookie", "")
        for part in header.split(";"):
            name, _, value = part.strip().partition("=")
            if name == self.server.scenario.cookie_name:  # type: ignore[union-attr]
                return value
        return self.server.scenario.default_state  # type: ignore[union-attr]

    def do_GET(self) -> None:
        server = self.server
        if server.rate_guard():
            self._reply(403, [("Content-Type", "text/html")], _CAPTCHA_BODY)
            return

        parts = urlsplit(self.path)
        target = parts.path + ("?" + parts.query if parts.query else "")

        if parts.path == "/__observations":
            payload = json.dumps(
                {"observations": server.observations, "csp_reports": server.csp_reports}
            ).encode()
            self._reply(200, [("Content-Type", "application/json")], payload)
            return

        if server.scenario is not None:
            spec_by_state = server.scenario.paths.get(target) or server.scenario.paths.get(
                parts.path
            )
            if spec_by_state is not None:
                state = self._cookie_state()
                spec = spec_by_state.get(state)
                if spec is None:
                    spec = spec_by_state.get(server.scenario.default_state)
                if spec is None:
                    self._reply(404, [("Content-Type", "text/plain")], b"no such state\n")
                    return
                self._reply_spec(spec)
                return

        try:
            spec = EchoSpec.from_query(parts.query)
        except EchoSpecError as exc:
            self._reply(400, [("Content-Type", "text/plain")], f"bad spec: {exc}\n".encode())
            return
        self._reply_spec(spec)

    def do_POST(self) -> None:
        server = self.server
        parts = urlsplit(self.path)
        length = int(self.headers.get("Content-Length", 0))
        payload = self.rfile.read(length) if length else b""

        if parts.path == "/report":
            for line in payload.decode("utf-8", "replace").splitlines():
                if line.strip():
                    server.observations.append(json.loads(line))
            self._reply(204, [], b"")
            return
        if parts.path == "/csp-report":
            try:
                server.csp_reports.append(json.loads(payload.decode("utf-8", "replace")))
            except json.JSONDecodeError:
                server.csp_reports.append({"raw": payload.decode("utf-8", "replace")})
            self._reply(204, [], b"")
            return
        # POST falls back to the echo protocol (form-post inclusions).
        self.do_GET()


class EchoServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int] = ("127.0.0.1", 0),
        scenario: Scenario | None = None,
        rate_flip_threshold: float | None = None,
        verbose: bool = False,
    ):
        super().__init__(address, _EchoHandler)
        self.scenario = scenario
        self.verbose = verbose
        self.observations: list[dict] = []
        self.csp_reports: list[dict] = []
        self._rate_lock = threading.Lock()
        self._min_interval = 1.0 / rate_flip_threshold if rate_flip_threshold else None
        self._last_request = 0.0
        self._thread: threading.Thread | None = None

    def rate_guard(self) -> bool:
        """True when the request arrives faster than the configured rate."""
        if self._min_interval is None:
            return False
        with self._rate_lock:
            now = time.monotonic()
            too_fast = (now - self._last_request) < self._min_interval
            self._last_request = now
            return too_fast

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "EchoServer":
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.shutdown()
        if self._thread:
            self._thread.join(timeout=5)
        self.server_close()


def serve(
    bind_address: tuple[str, int] = ("127.0.0.1", 0),
    scenario: Scenario | None = None,
    rate_flip_threshold: float | None = None,
) -> EchoServer:
    """Start a background echo server; caller owns .stop()."""
    return EchoServer(bind_address, scenario=scenario, rate_flip_threshold=rate_flip_threshold).start()


# --------------------------------------------------------------------------
# Response-space enumeration
# --------------------------------------------------------------------------

ENUMERATION_CAP = 20000

_GRID_PARAMS = ("sc", "ct", "xcto", "xfo", "cd", "body")


def grid_size(axes: dict[str, list]) -> int:
    size = 1
    for values in axes.values():
        size *= len(values)
    return size


def enumerate_responses(axes: dict[str, list], base_url: str, cap: int = ENUMERATION_CAP):
    """Yield (spec_id, url) over the cartesian product of the grid axes.

    Deterministic: axes iterate in sorted-key order, values in listed order.
    """
    if not axes:
        raise EnumerationError("empty grid")
    for axis in axes:
        if axis not in _GRID_PARAMS:
            raise EnumerationError(f"unknown grid axis {axis!r}")
    size = grid_size(axes)
    if size > cap:
        raise EnumerationError(f"grid size {size} exceeds cap {cap}")

    keys = sorted(axes)
    for index, combo in enumerate(itertools.product(*(axes[k] for k in keys))):
        params = {k: str(v) for k, v in zip(keys, combo) if str(v) != ""}
        spec = EchoSpec.from_params(params)
        spec_id = f"enum-{index:05d}"
        yield spec_id, f"{base_url}/enum/{spec_id}?{spec.to_query()}"
