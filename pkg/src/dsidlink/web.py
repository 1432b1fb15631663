"""Minimal HTTP plumbing shared by every service.

Services are plain WSGI callables (so tests can drive them without sockets)
and :class:`ServiceServer` puts one on a loopback port in a background thread.
:func:`http_get` / :func:`http_request` never follow redirects: the resolver
needs to see the 302 itself.
"""

from __future__ import annotations

import http.client
import logging
import socket
import threading
import time
from dataclasses import dataclass, field
from socketserver import ThreadingMixIn
from typing import Callable, Iterable, Mapping
from urllib.parse import parse_qsl, urlsplit
from wsgiref.simple_server import WSGIRequestHandler, WSGIServer, make_server

log = logging.getLogger(__name__)

REASONS = {
    200: "OK",
    302: "Found",
    304: "Not Modified",
    400: "Bad Request",
    404: "Not Found",
    405: "Method Not Allowed",
    413: "Payload Too Large",
    500: "Internal Server Error",
    503: "Service Unavailable",
}

XML = "application/xml; charset=utf-8"
TEXT = "text/plain; charset=utf-8"


class TransportError(OSError):
    """Connection refused, reset or timed out; no HTTP status was obtained."""


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, str]
    body: bytes = b""
    headers: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_environ(cls, environ) -> "Request":
        query: dict[str, str] = {}
        # first occurrence wins; names are case sensitive
        for key, value in parse_qsl(environ.get("QUERY_STRING", ""), keep_blank_values=True):
            query.setdefault(key, value)
        try:
            length = int(environ.get("CONTENT_LENGTH") or 0)
        except ValueError:
            length = 0
        body = environ["wsgi.input"].read(length) if length > 0 else b""
        headers = {
            k[5:].replace("_", "-").lower(): v for k, v in environ.items() if k.startswith("HTTP_")
        }
        return cls(environ["REQUEST_METHOD"].upper(), environ.get("PATH_INFO", "/"), query, body, headers)


@dataclass
class Response:
    status: int
    body: bytes = b""
    content_type: str = TEXT
    headers: list[tuple[str, str]] = field(default_factory=list)

    def header(self, name: str) -> str | None:
        for key, value in self.headers:
            if key.lower() == name.lower():
                return value
        return None


def text_response(status: int, text: str) -> Response:
    return Response(status, text.encode("utf-8"), TEXT)


def redirect(location: str, extra: Iterable[tuple[str, str]] = ()) -> Response:
    return Response(302, b"", TEXT, [("Location", location), *extra])


Handler = Callable[[Request], Response]


class App:
    """Path/method router; subclasses register handlers in ``routes``."""

    def __init__(self):
        self.routes: dict[tuple[str, str], Handler] = {}

    def route(self, method: str, path: str, handler: Handler) -> None:
        self.routes[(method.upper(), path)] = handler

    def handle(self, request: Request) -> Response:
        handler = self.routes.get((request.method, request.path))
        if handler is None:
            if any(path == request.path for _, path in self.routes):
                return text_response(405, "method not allowed\n")
            return text_response(404, "no such endpoint\n")
        try:
            return handler(request)
        except Exception:
            log.exception("handler failed for %s %s", request.method, request.path)
            return text_response(500, "internal error\n")

    def __call__(self, environ, start_response):
        response = self.handle(Request.from_environ(environ))
        headers = [("Content-Type", response.content_type), ("Content-Length", str(len(response.body)))]
        headers.extend(response.headers)
        start_response(f"{response.status} {REASONS.get(response.status, 'Status')}", headers)
        return [response.body]


class Dispatcher:
    """Mount several apps on one server, first match by path."""

    def __init__(self, *apps: App):
        self.apps = apps

    def __call__(self, environ, start_response):
        path = environ.get("PATH_INFO", "/")
        for app in self.apps:
            if any(p == path for _, p in app.routes):
                return app(environ, start_response)
        return self.apps[0](environ, start_response)


class _ThreadingWSGIServer(ThreadingMixIn, WSGIServer):
    daemon_threads = True
    allow_reuse_address = True


class _QuietHandler(WSGIRequestHandler):
    def log_message(self, format, *args):
        log.debug("%s - %s", self.address_string(), format % args)


class ServiceServer:
    """Serve a WSGI app on a loopback port; ``stop``/``start`` simulate an outage."""

    def __init__(self, app, host: str = "127.0.0.1", port: int = 0):
        self.app = app
        self.host = host
        self.port = port
        self._server: WSGIServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    @property
    def running(self) -> bool:
        return self._server is not None

    def set_app(self, app) -> None:
        self.app = app
        if self._server is not None:
            self._server.set_app(app)

    def start(self) -> "ServiceServer":
        if self._server is not None:
            return self
        server = make_server(
            self.host, self.port, self.app, server_class=_ThreadingWSGIServer, handler_class=_QuietHandler
        )
        self.port = server.server_address[1]
        self._server = server
        self._thread = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        server, self._server = self._server, None
        if server is None:
            return
        server.shutdown()
        server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


@dataclass
class HttpResponse:
    status: int
    headers: Mapping[str, str]
    body: bytes

    def header(self, name: str) -> str | None:
        return self.headers.get(name.lower())


HttpClient = Callable[..., HttpResponse]


def http_request(
    method: str,
    url: str,
    *,
    body: bytes | None = None,
    headers: Mapping[str, str] | None = None,
    timeout: float = 5.0,
) -> HttpResponse:
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.hostname:
        raise TransportError(f"unsupported URL {url!r}")
    conn_cls = http.client.HTTPSConnection if parts.scheme == "https" else http.client.HTTPConnection
    target = parts.path or "/"
    if parts.query:
        target += "?" + parts.query
    conn = conn_cls(parts.hostname, parts.port, timeout=max(timeout, 0.001))
    try:
        conn.request(method, target, body=body, headers=dict(headers or {}))
        resp = conn.getresponse()
        data = resp.read()
        return HttpResponse(resp.status, {k.lower(): v for k, v in resp.getheaders()}, data)
    except (OSError, http.client.HTTPException, socket.timeout) as exc:
        raise TransportError(f"{method} {url}: {exc}") from exc
    finally:
        conn.close()


def http_get(url: str, *, headers: Mapping[str, str] | None = None, timeout: float = 5.0) -> HttpResponse:
    return http_request("GET", url, headers=headers, timeout=timeout)


def get_with_retry(client: HttpClient, url: str, timeout: float, retries: int = 1) -> HttpResponse:
    """GET with ``retries`` extra attempts on transport errors or 5xx.

    All attempts share a single ``timeout`` budget, so a hanging peer costs
    at most ``timeout`` seconds in total.
    """
    deadline = time.monotonic() + timeout
    attempt = 0
    while True:
        remaining = deadline - time.monotonic()
        try:
            resp = client(url, timeout=remaining)
        except TransportError:
            attempt += 1
            if attempt > retries or deadline - time.monotonic() <= 0.005:
                raise
            continue
        if resp.status >= 500 and attempt < retries and deadline - time.monotonic() > 0.005:
            attempt += 1
            continue
        return resp
