"""Data-center profiles and the facility routing table.

A profile is a small XML document each center serves at a fixed path::

    <datacenter id="MAST">
      <name>Multimission Archive at STScI</name>
      <verifier>http://archive.example/verify</verifier>
      <resolver>http://archive.example/resolve</resolver>
      <facility>hst</facility>
      <facility>fuse</facility>
    </datacenter>

:class:`ProfileRegistry` fetches every registered profile, builds a complete
:class:`RoutingTable` and swaps it in with a single reference assignment, so a
reader holding a snapshot never sees a half-applied refresh.
"""

from __future__ import annotations

import enum
import logging
import threading
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from types import MappingProxyType
from typing import Callable, Iterable, Mapping
from urllib.parse import urlsplit

from defusedxml import ElementTree as SafeET
from defusedxml.common import DefusedXmlException

from .clock import utc_now
from .identifier import is_facility_token, normalize_facility
from .web import HttpClient, TransportError, http_get

log = logging.getLogger(__name__)

PROFILE_PATH = "/.well-known/dsid-profile.xml"
DEFAULT_REFRESH_INTERVAL = timedelta(hours=6)
DEFAULT_STALENESS_HORIZON = timedelta(days=7)


class ProfileErrorKind(enum.Enum):
    MALFORMED_XML = "MalformedXml"
    MISSING_FIELD = "MissingField"
    EMPTY_FACILITIES = "EmptyFacilities"
    BAD_URL = "BadUrl"
    BAD_TOKEN = "BadToken"


class ProfileError(ValueError):
    def __init__(self, kind: ProfileErrorKind, field_name: str | None = None, detail: str = ""):
        self.kind = kind
        self.field = field_name
        msg = kind.value if field_name is None else f"{kind.value}({field_name})"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class UnknownFacility(LookupError):
    pass


@dataclass(frozen=True)
class DataCenterProfile:
    center_id: str
    display_name: str
    verifier_url: str
    resolver_url: str
    facilities: frozenset[str]
    fetched_at: datetime | None = None


def _is_http_url(value: str) -> bool:
    parts = urlsplit(value)
    return parts.scheme in ("http", "https") and bool(parts.netloc) and not any(c.isspace() for c in value)


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def parse_profile(document: bytes, fetched_at: datetime | None = None) -> DataCenterProfile:
    try:
        root = SafeET.fromstring(document)
    except (ET.ParseError, DefusedXmlException) as exc:
        raise ProfileError(ProfileErrorKind.MALFORMED_XML, detail=str(exc)) from exc
    if _local(root.tag) != "datacenter":
        raise ProfileError(ProfileErrorKind.MALFORMED_XML, detail=f"unexpected root <{_local(root.tag)}>")

    center_id = (root.get("id") or "").strip()
    if not center_id:
        raise ProfileError(ProfileErrorKind.MISSING_FIELD, "id")
    if not is_facility_token(center_id):
        raise ProfileError(ProfileErrorKind.BAD_TOKEN, "id", center_id)

    singles: dict[str, str] = {}
    facilities: set[str] = set()
    for child in root:
        name = _local(child.tag)
        text = (child.text or "").strip()
        if name == "facility":
            if not is_facility_token(text):
                raise ProfileError(ProfileErrorKind.BAD_TOKEN, "facility", text)
            facilities.add(normalize_facility(text))
        elif name in ("name", "verifier", "resolver"):
            singles.setdefault(name, text)
        # anything else is a later schema addition; ignore it

    for name in ("name", "verifier", "resolver"):
        if not singles.get(name):
            raise ProfileError(ProfileErrorKind.MISSING_FIELD, name)
    for name in ("verifier", "resolver"):
        if not _is_http_url(singles[name]):
            raise ProfileError(ProfileErrorKind.BAD_URL, name, singles[name])
    if not facilities:
        raise ProfileError(ProfileErrorKind.EMPTY_FACILITIES)

    return DataCenterProfile(
        center_id=center_id,
        display_name=singles["name"],
        verifier_url=singles["verifier"],
        resolver_url=singles["resolver"],
        facilities=frozenset(facilities),
        fetched_at=fetched_at,
    )


def profile_to_xml(
    center_id: str, display_name: str, verifier_url: str, resolver_url: str, facilities: Iterable[str]
) -> bytes:
    root = ET.Element("datacenter", {"id": center_id})
    for tag, text in (("name", display_name), ("verifier", verifier_url), ("resolver", resolver_url)):
        ET.SubElement(root, tag).text = text
    for facility in sorted(set(facilities)):
        ET.SubElement(root, "facility").text = facility
    ET.indent(root)
    return b'<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="utf-8") + b"\n"


@dataclass(frozen=True)
class RoutingTable:
    version: int = 0
    facilities: Mapping[str, str] = field(default_factory=lambda: MappingProxyType({}))
    centers: Mapping[str, DataCenterProfile] = field(default_factory=lambda: MappingProxyType({}))

    def route(self, facility: str) -> DataCenterProfile:
        center_id = self.facilities.get(facility)
        if center_id is None:
            raise UnknownFacility(facility)
        return self.centers[center_id]


@dataclass
class RefreshReport:
    version: int
    fetched: list[str] = field(default_factory=list)
    not_modified: list[str] = field(default_factory=list)
    errors: dict[str, str] = field(default_factory=dict)
    retained: list[str] = field(default_factory=list)
    dropped: list[str] = field(default_factory=list)
    conflicts: list[tuple[str, str, str]] = field(default_factory=list)  # facility, winner, loser


@dataclass
class _Cached:
    profile: DataCenterProfile
    etag: str | None = None


def build_table(
    profiles: Iterable[DataCenterProfile], version: int, conflicts: list | None = None,
    stale: frozenset[str] | set[str] = frozenset(),
) -> RoutingTable:
    """Facility map with single ownership.

    A profile fetched in this round beats one retained from an earlier round
    (``stale``); otherwise the newest ``fetched_at`` wins and ties go to the
    smaller center id.
    """
    def rank(p: DataCenterProfile):
        return (p.center_id not in stale, p.fetched_at is not None, p.fetched_at or datetime.min)

    owners: dict[str, DataCenterProfile] = {}
    centers: dict[str, DataCenterProfile] = {}
    for profile in sorted(profiles, key=lambda p: p.center_id):
        centers[profile.center_id] = profile
        for facility in profile.facilities:
            current = owners.get(facility)
            if current is None:
                owners[facility] = profile
                continue
            if rank(profile) > rank(current):
                winner, loser = profile, current
            else:
                winner, loser = current, profile
            owners[facility] = winner
            log.warning(
                "facility %s claimed by %s and %s; routing to %s", facility, current.center_id,
                profile.center_id, winner.center_id,
            )
            if conflicts is not None:
                conflicts.append((facility, winner.center_id, loser.center_id))
    return RoutingTable(
        version=version,
        facilities=MappingProxyType({f: p.center_id for f, p in owners.items()}),
        centers=MappingProxyType(centers),
    )


class ProfileRegistry:
    """Answers "which center serves facility F" from periodically fetched profiles.

    ``sources`` are ``(center_id, base_url)`` pairs; each profile is fetched
    from ``base_url + PROFILE_PATH``.  ``clock`` is injectable so that the
    refresh period and the staleness horizon can be driven by a simulated clock.
    """

    def __init__(
        self,
        sources: Iterable[tuple[str, str]] = (),
        *,
        client: HttpClient = http_get,
        clock: Callable[[], datetime] = utc_now,
        refresh_interval: timedelta = DEFAULT_REFRESH_INTERVAL,
        staleness_horizon: timedelta = DEFAULT_STALENESS_HORIZON,
        fetch_timeout: float = 5.0,
        max_workers: int = 8,
    ):
        self.sources: dict[str, str] = dict(sources)
        self.client = client
        self.clock = clock
        self.refresh_interval = refresh_interval
        self.staleness_horizon = staleness_horizon
        self.fetch_timeout = fetch_timeout
        self.max_workers = max_workers
        self._table = RoutingTable()
        self._cache: dict[str, _Cached] = {}
        self._refresh_lock = threading.Lock()
        self.last_refresh: datetime | None = None
        self.last_report: RefreshReport | None = None
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def add_source(self, center_id: str, base_url: str) -> None:
        with self._refresh_lock:
            self.sources[center_id] = base_url

    def snapshot(self) -> RoutingTable:
        return self._table

    @property
    def version(self) -> int:
        return self._table.version

    def route(self, facility: str) -> DataCenterProfile:
        return self._table.route(facility)

    def _fetch(self, center_id: str, base_url: str):
        url = base_url.rstrip("/") + PROFILE_PATH
        cached = self._cache.get(center_id)
        headers = {"If-None-Match": cached.etag} if cached and cached.etag else None
        resp = self.client(url, headers=headers, timeout=self.fetch_timeout)
        if resp.status == 304 and cached is not None:
            return None, cached.etag
        if resp.status != 200:
            raise TransportError(f"HTTP {resp.status} from {url}")
        profile = parse_profile(resp.body)
        if profile.center_id != center_id:
            raise ProfileError(ProfileErrorKind.BAD_TOKEN, "id", f"expected {center_id}, got {profile.center_id}")
        return profile, resp.header("etag")

    def refresh(self) -> RefreshReport:
        """Fetch every profile and publish a new routing table (version + 1).

        Per-source failures go into the report; a failed center keeps its
        last good profile until that profile is older than the staleness horizon.
        """
        with self._refresh_lock:
            now = self.clock()
            report = RefreshReport(version=self._table.version + 1)
            sources = sorted(self.sources.items())
            with ThreadPoolExecutor(max_workers=max(1, min(self.max_workers, len(sources) or 1))) as pool:
                futures = {cid: pool.submit(self._fetch, cid, base) for cid, base in sources}
            for center_id, future in futures.items():
                try:
                    profile, etag = future.result()
                except (TransportError, ProfileError) as exc:
                    report.errors[center_id] = str(exc)
                    continue
                if profile is None:
                    cached = self._cache[center_id]
                    cached.profile = replace(cached.profile, fetched_at=now)
                    report.not_modified.append(center_id)
                else:
                    self._cache[center_id] = _Cached(replace(profile, fetched_at=now), etag)
                    report.fetched.append(center_id)

            live: list[DataCenterProfile] = []
            for center_id in list(self._cache):
                cached = self._cache[center_id]
                if center_id not in self.sources:
                    del self._cache[center_id]
                    continue
                if center_id in report.errors:
                    if now - cached.profile.fetched_at >= self.staleness_horizon:
                        log.warning("dropping %s: no profile since %s", center_id, cached.profile.fetched_at)
                        report.dropped.append(center_id)
                        del self._cache[center_id]
                        continue
                    report.retained.append(center_id)
                live.append(cached.profile)
            for center_id, error in report.errors.items():
                log.info("profile refresh failed for %s: %s", center_id, error)

            self._table = build_table(live, report.version, report.conflicts, set(report.retained))
            self.last_refresh = now
            self.last_report = report
            return report

    def refresh_due(self) -> bool:
        return self.last_refresh is None or self.clock() - self.last_refresh >= self.refresh_interval

    def maybe_refresh(self) -> RefreshReport | None:
        return self.refresh() if self.refresh_due() else None

    def start(self) -> None:
        """Refresh now and then every ``refresh_interval`` of wall time in a daemon thread."""
        if self._thread is not None:
            return
        self._stop.clear()
        self.refresh()

        def loop():
            while not self._stop.wait(self.refresh_interval.total_seconds()):
                try:
                    self.refresh()
                except Exception:
                    log.exception("profile refresh cycle failed")

        self._thread = threading.Thread(target=loop, name="profile-refresh", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join()
            self._thread = None
