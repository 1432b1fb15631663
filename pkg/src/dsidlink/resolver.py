"""The permanent-link endpoint: ``GET /link?id=<identifier>`` -> 302 to wherever the data is now.

Published links point here, never at a data center.  Each request is routed
through the current profile snapshot and the owning center is asked for the
dataset's current URL.  Answers are cached for ``cache_ttl`` seconds; when
the owning center is down an expired entry may still be served, flagged with
``X-Resolver-Stale: true``.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable

from .clock import utc_now
from .identifier import IdentifierError, dataset_key, format_identifier, parse
from .registry import ProfileRegistry, UnknownFacility
from .verifier import local_query_url
from .web import App, HttpClient, Request, Response, TransportError, get_with_retry, http_get, redirect, text_response

STALE_HEADER = "X-Resolver-Stale"


class Outcome(enum.Enum):
    REDIRECT = "redirect"
    INVALID_SYNTAX = "invalid-syntax"
    UNKNOWN_FACILITY = "unknown-facility"
    NOT_FOUND = "not-found"
    CENTER_UNAVAILABLE = "center-unavailable"


HTTP_STATUS = {
    Outcome.REDIRECT: 302,
    Outcome.INVALID_SYNTAX: 400,
    Outcome.UNKNOWN_FACILITY: 404,
    Outcome.NOT_FOUND: 404,
    Outcome.CENTER_UNAVAILABLE: 503,
}


@dataclass(frozen=True)
class ResolutionOutcome:
    status: Outcome
    target: str | None = None
    stale: bool = False
    detail: str = ""

    def __post_init__(self):
        if (self.status is Outcome.REDIRECT) != (self.target is not None):
            raise ValueError("target must be present exactly for redirects")


@dataclass(frozen=True)
class ResolutionCacheEntry:
    identifier: str
    target: str
    cached_at: datetime
    ttl: float
    center_id: str

    def fresh(self, now: datetime) -> bool:
        return now - self.cached_at < timedelta(seconds=self.ttl)


class LinkResolver:
    def __init__(
        self,
        registry: ProfileRegistry,
        *,
        client: HttpClient = http_get,
        clock: Callable[[], datetime] = utc_now,
        cache_ttl: float = 3600.0,
        stale_serve: bool = True,
        remote_timeout: float = 5.0,
    ):
        self.registry = registry
        self.client = client
        self.clock = clock
        self.cache_ttl = cache_ttl
        self.stale_serve = stale_serve
        self.remote_timeout = remote_timeout
        self._cache: dict[str, ResolutionCacheEntry] = {}
        self._lock = threading.Lock()

    def _store(self, entry: ResolutionCacheEntry) -> None:
        # ttl 0 turns the cache off entirely, stale copies included
        if self.cache_ttl > 0:
            with self._lock:
                self._cache[entry.identifier] = entry

    def _drop(self, key: str) -> None:
        with self._lock:
            self._cache.pop(key, None)

    def cached(self, identifier: str) -> ResolutionCacheEntry | None:
        try:
            return self._cache.get(format_identifier(parse(identifier)))
        except IdentifierError:
            return None

    def invalidate(self, identifier: str) -> None:
        try:
            key = format_identifier(parse(identifier))
        except IdentifierError:
            return
        self._drop(key)

    def resolve(self, identifier: str) -> ResolutionOutcome:
        try:
            ident = parse(identifier)
        except IdentifierError as exc:
            return ResolutionOutcome(Outcome.INVALID_SYNTAX, detail=str(exc))
        key = format_identifier(ident)
        facility, private = dataset_key(ident)
        try:
            profile = self.registry.snapshot().route(facility)
        except UnknownFacility:
            self._drop(key)
            return ResolutionOutcome(Outcome.UNKNOWN_FACILITY, detail=f"no data center serves {facility!r}")

        now = self.clock()
        entry = self._cache.get(key)
        if entry is not None and entry.center_id == profile.center_id and entry.fresh(now):
            return ResolutionOutcome(Outcome.REDIRECT, entry.target)

        url = local_query_url(profile.resolver_url, facility, private)
        try:
            resp = get_with_retry(self.client, url, self.remote_timeout)
        except TransportError as exc:
            return self._unavailable(entry, profile.center_id, f"{profile.center_id} unreachable: {exc}")

        location = resp.header("location")
        if resp.status in (301, 302, 303, 307, 308) and location:
            self._store(ResolutionCacheEntry(key, location, now, self.cache_ttl, profile.center_id))
            return ResolutionOutcome(Outcome.REDIRECT, location)
        if resp.status == 404 and resp.header("x-dsid-error") != "facility-not-served":
            self._drop(key)
            return ResolutionOutcome(Outcome.NOT_FOUND, detail=f"{profile.center_id} has no dataset {private!r}")
        return self._unavailable(entry, profile.center_id, f"{profile.center_id} answered HTTP {resp.status}")

    def _unavailable(self, entry, center_id: str, detail: str) -> ResolutionOutcome:
        if self.stale_serve and entry is not None and entry.center_id == center_id:
            return ResolutionOutcome(Outcome.REDIRECT, entry.target, stale=True, detail=detail)
        return ResolutionOutcome(Outcome.CENTER_UNAVAILABLE, detail=detail)


class ResolverApp(App):
    def __init__(self, resolver: LinkResolver):
        super().__init__()
        self.resolver = resolver
        self.route("GET", "/link", self._link)

    def _link(self, request: Request) -> Response:
        if "id" not in request.query:
            return text_response(400, "missing id parameter\n")
        outcome = self.resolver.resolve(request.query["id"])
        if outcome.status is Outcome.REDIRECT:
            extra = [(STALE_HEADER, "true")] if outcome.stale else []
            return redirect(outcome.target, extra)
        return text_response(HTTP_STATUS[outcome.status], f"{outcome.status.value}: {outcome.detail}\n")
