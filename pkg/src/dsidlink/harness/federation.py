"""A whole federation in one process: the hub plus N mock data centers, each on
its own loopback port, sharing one simulated clock.

Every request the hub makes to a center goes through :class:`Tracer`, so tests
can count upstream calls and scenario reports can show them.  URLs in traces
are rewritten to service names (``MAST /verify?...``) to keep them stable
across runs.
"""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Iterable
from urllib.parse import quote, urlsplit

from ..center import CenterApp, DataCenter, InventoryRecord
from ..clock import SimClock
from ..hub import Hub, HubConfig, build_hub
from ..identifier import dataset_key, normalize_facility, parse
from ..verifier import make_permanent_link
from ..web import HttpResponse, ServiceServer, TransportError, http_get, http_request

# Centers from the participant list; the facility holdings are illustrative.
DEFAULT_TOPOLOGY: dict[str, tuple[str, tuple[str, ...]]] = {
    "CXC": ("Chandra X-ray Center", ("chandra",)),
    "HEASARC": ("High Energy Astrophysics Science Archive Research Center", ("rxte", "asca", "rosat")),
    "IRSA": ("Infrared Science Archive", ("iras", "2mass", "msx")),
    "LAMBDA": ("Legacy Archive for Microwave Background Data Analysis", ("wmap", "cobe")),
    "MAST": ("Multimission Archive at Space Telescope Science Institute", ("hst", "fuse", "iue", "galex")),
    "SSC": ("Spitzer Science Center", ("spitzer",)),
}


@dataclass(frozen=True)
class CenterSpec:
    center_id: str
    facilities: tuple[str, ...]
    display_name: str | None = None


def default_centers() -> list[CenterSpec]:
    return [CenterSpec(cid, facs, name) for cid, (name, facs) in DEFAULT_TOPOLOGY.items()]


@dataclass
class FederationSettings:
    cache_ttl: float = 3600.0
    stale_serve: bool = True
    remote_timeout: float = 5.0
    refresh_interval: float = 6 * 3600.0
    staleness_horizon: float = 7 * 86400.0
    batch_cap: int = 1000


class Tracer:
    """Records upstream calls; usable as the hub's HTTP client."""

    def __init__(self):
        self.names: dict[str, str] = {}
        self._lock = threading.Lock()
        self.calls: list[str] = []
        self.by_service: Counter[tuple[str, str]] = Counter()

    def name(self, url: str) -> tuple[str, str]:
        parts = urlsplit(url)
        service = self.names.get(f"{parts.scheme}://{parts.netloc}", parts.netloc)
        target = parts.path + ("?" + parts.query if parts.query else "")
        return service, target

    def record(self, method: str, url: str, outcome: str) -> None:
        service, target = self.name(url)
        with self._lock:
            self.calls.append(f"{service} {method} {target} -> {outcome}")
            self.by_service[(service, urlsplit(url).path)] += 1

    def drain(self) -> list[str]:
        with self._lock:
            calls, self.calls = self.calls, []
        return sorted(calls)

    def client(self, url: str, *, headers=None, timeout: float = 5.0) -> HttpResponse:
        try:
            resp = http_get(url, headers=headers, timeout=timeout)
        except TransportError:
            self.record("GET", url, "unreachable")
            raise
        self.record("GET", url, str(resp.status))
        return resp


@dataclass
class MockCenter:
    spec: CenterSpec
    center: DataCenter
    app: CenterApp
    server: ServiceServer
    stall: threading.Event | None = None

    @property
    def url(self) -> str:
        return self.server.url


class Federation:
    def __init__(self, centers: Iterable[CenterSpec] | None = None, settings: FederationSettings | None = None):
        self.settings = settings or FederationSettings()
        self.clock = SimClock()
        self.tracer = Tracer()
        self.centers: dict[str, MockCenter] = {}
        for spec in centers if centers is not None else default_centers():
            server = ServiceServer(None).start()
            center = DataCenter(
                spec.center_id, spec.display_name, base_url=server.url, facilities=spec.facilities, clock=self.clock
            )
            app = CenterApp(center)
            server.set_app(app)
            self.tracer.names[server.url] = spec.center_id
            self.centers[spec.center_id] = MockCenter(spec, center, app, server)

        self.hub_server = ServiceServer(None).start()
        self.tracer.names[self.hub_server.url] = "hub"
        s = self.settings
        config = HubConfig(
            resolver_base_url=self.hub_server.url,
            centers=[(cid, mc.url) for cid, mc in self.centers.items()],
            refresh_interval=timedelta(seconds=s.refresh_interval),
            staleness_horizon=timedelta(seconds=s.staleness_horizon),
            remote_timeout_ms=int(s.remote_timeout * 1000),
            batch_cap=s.batch_cap,
            cache_ttl_s=s.cache_ttl,
            stale_serve=s.stale_serve,
        )
        self.hub: Hub = build_hub(config, client=self.tracer.client, clock=self.clock)
        self.hub_server.set_app(self.hub.app)
        self.hub.registry.refresh()

    # -- lifecycle

    def close(self) -> None:
        for mc in self.centers.values():
            if mc.stall is not None:
                mc.stall.set()
            mc.server.stop()
        self.hub_server.stop()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def hub_url(self) -> str:
        return self.hub_server.url

    # -- data

    def seed(self, center_id: str, facility: str, private_id: str, url: str) -> InventoryRecord:
        return self.centers[center_id].center.insert(facility, private_id, url)

    def holder(self, facility: str) -> str | None:
        facility = normalize_facility(facility)
        for cid, mc in self.centers.items():
            if facility in mc.center.facilities:
                return cid
        return None

    def update_url(self, facility: str, private_id: str, url: str) -> None:
        facility = normalize_facility(facility)
        cid = self.holder(facility)
        if cid is None:
            raise KeyError(facility)
        self.centers[cid].center.update_url(facility, private_id, url)

    def migrate(self, facility: str, source: str, target: str) -> int:
        facility = normalize_facility(facility)
        records = self.centers[source].center.hand_off(facility)
        dst = self.centers[target].center
        dst.serve_facility(facility)
        return dst.import_records(records)

    def inventory_multiset(self) -> Counter:
        return Counter(
            (r.facility_id, r.private_id, r.current_url) for mc in self.centers.values() for r in mc.center.all_records()
        )

    # -- outages

    def kill(self, center_id: str) -> None:
        self.centers[center_id].server.stop()

    def hang(self, center_id: str) -> None:
        mc = self.centers[center_id]
        if mc.stall is None:
            mc.stall = threading.Event()
            mc.app.stall = mc.stall

    def revive(self, center_id: str) -> None:
        mc = self.centers[center_id]
        if mc.stall is not None:
            mc.app.stall = None
            mc.stall.set()
            mc.stall = None
        mc.server.start()

    # -- time

    def refresh(self):
        return self.hub.registry.refresh()

    def advance(self, seconds: float) -> int:
        """Move the clock forward, running every profile refresh that falls due on the way."""
        registry = self.hub.registry
        target = self.clock() + timedelta(seconds=seconds)
        refreshes = 0
        while registry.last_refresh is not None and registry.last_refresh + registry.refresh_interval <= target:
            self.clock.set(registry.last_refresh + registry.refresh_interval)
            registry.refresh()
            refreshes += 1
        self.clock.set(target)
        return refreshes

    def quiesce(self) -> None:
        """Let every cache entry expire, then refresh profiles."""
        self.advance(self.settings.cache_ttl)
        self.refresh()

    # -- client side, over HTTP like a browser or publisher would

    def permanent_link(self, identifier: str) -> str:
        return make_permanent_link(self.hub_url, identifier)

    def get(self, url: str, timeout: float = 30.0) -> HttpResponse:
        return http_get(url, timeout=timeout)

    def resolve_http(self, identifier: str) -> HttpResponse:
        return self.get(self.permanent_link(identifier))

    def verify_http(self, identifier: str) -> HttpResponse:
        return self.get(f"{self.hub_url}/verify?id={quote(identifier, safe='')}")

    def verify_batch_http(self, identifiers: list[str]) -> HttpResponse:
        body = "".join(i + "\n" for i in identifiers).encode("utf-8")
        return http_request("POST", f"{self.hub_url}/verify", body=body, timeout=60.0)

    def ingest_http(self, source: str, feed: bytes) -> HttpResponse:
        return http_request("PUT", f"{self.hub_url}/feed?source={quote(source, safe='')}", body=feed, timeout=30.0)

    def harvest_http(self, facility: str | None = None, since: str | None = None) -> HttpResponse:
        params = []
        if facility:
            params.append("facility=" + quote(facility, safe=""))
        if since:
            params.append("since=" + quote(since, safe=""))
        return self.get(f"{self.hub_url}/correlations" + ("?" + "&".join(params) if params else ""))

    def upstream_count(self, center_id: str, path: str) -> int:
        return self.tracer.by_service[(center_id, path)]


def oracle_key(identifier: str) -> tuple[str, str]:
    return dataset_key(parse(identifier))
