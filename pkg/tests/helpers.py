"""Drive a WSGI app in-process, no sockets."""

from __future__ import annotations

import io
from urllib.parse import urlencode, quote
from wsgiref.util import setup_testing_defaults

from dsidlink.web import HttpResponse


def call(app, method: str, path: str, query: dict | str | None = None, body: bytes = b"", headers=None) -> HttpResponse:
    if isinstance(query, dict):
        query = urlencode(query, quote_via=quote)
    environ = {
        "REQUEST_METHOD": method,
        "PATH_INFO": path,
        "QUERY_STRING": query or "",
        "CONTENT_LENGTH": str(len(body)),
        "wsgi.input": io.BytesIO(body),
    }
    for key, value in (headers or {}).items():
        environ["HTTP_" + key.upper().replace("-", "_")] = value
    setup_testing_defaults(environ)
    captured = {}

    def start_response(status, hdrs, exc_info=None):
        captured["status"] = int(status.split()[0])
        captured["headers"] = {k.lower(): v for k, v in hdrs}

    data = b"".join(app(environ, start_response))
    return HttpResponse(captured["status"], captured["headers"], data)


class InProcessNet:
    """An ``http_get``-shaped client that routes by host to WSGI apps.

    Hosts in ``down`` refuse connections; hosts in ``hanging`` sleep out the
    caller's timeout and then fail, like a peer that never answers.
    """

    def __init__(self):
        self.apps: dict[str, object] = {}
        self.down: set[str] = set()
        self.hanging: set[str] = set()
        self.calls: list[str] = []

    def mount(self, host: str, app) -> str:
        self.apps[host] = app
        return f"http://{host}"

    def __call__(self, url, *, headers=None, timeout=5.0):
        import time
        from urllib.parse import urlsplit

        from dsidlink.web import TransportError

        self.calls.append(url)
        parts = urlsplit(url)
        if parts.netloc in self.hanging:
            time.sleep(max(timeout, 0))
            raise TransportError(f"timed out: {url}")
        if parts.netloc in self.down or parts.netloc not in self.apps:
            raise TransportError(f"connection refused: {url}")
        return call(self.apps[parts.netloc], "GET", parts.path, parts.query, headers=headers)


def small_federation(net: InProcessNet, clock, tmp_path=None):
    """MAST (mast, hst, fuse) and CXC (chandra) with a few records, plus a registry."""
    from dsidlink.center import CenterApp, DataCenter
    from dsidlink.registry import ProfileRegistry

    centers = {}
    for cid, facs in {"MAST": ["mast", "hst", "fuse"], "CXC": ["chandra"]}.items():
        host = f"{cid.lower()}.example"
        inv = None if tmp_path is None else tmp_path / f"{cid}.tsv"
        center = DataCenter(cid, base_url=f"http://{host}", facilities=facs, inventory_path=inv, clock=clock)
        centers[cid] = (center, CenterApp(center))
        net.mount(host, centers[cid][1])
    centers["MAST"][0].insert("hst", "hst.07442", "http://mast.example/data/hst.07442")
    centers["MAST"][0].insert("mast", "hst.07442", "http://mast.example/data/mast/hst.07442")
    centers["MAST"][0].insert("fuse", "f1", "http://mast.example/data/f1")
    centers["CXC"][0].insert("chandra", "obs/1234", "http://cxc.example/data/1234")
    registry = ProfileRegistry(
        [(cid, c.base_url) for cid, (c, _) in centers.items()], client=net, clock=clock
    )
    registry.refresh()
    return centers, registry
