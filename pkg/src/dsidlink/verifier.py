"""Master verifier: parse, route to the owning center, ask its local verifier.

A valid identifier comes back with a permanent link that points at the link
resolver, never at the data center.
"""

from __future__ import annotations

import enum
import logging
import re
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from urllib.parse import quote, urlencode

from defusedxml import ElementTree as SafeET
from defusedxml.common import DefusedXmlException

from .identifier import IdentifierError, dataset_key, format_identifier, parse
from .registry import ProfileRegistry, UnknownFacility
from .web import XML, App, HttpClient, Request, Response, TransportError, get_with_retry, http_get, http_request, text_response

log = logging.getLogger(__name__)

DEFAULT_BATCH_CAP = 1000
DEFAULT_REMOTE_TIMEOUT = 5.0


class Status(enum.Enum):
    VALID = "valid"
    INVALID_SYNTAX = "invalid-syntax"
    UNKNOWN_FACILITY = "unknown-facility"
    NOT_FOUND = "not-found"
    CENTER_UNAVAILABLE = "center-unavailable"


class BatchTooLarge(ValueError):
    pass


_XML_ILLEGAL = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ufffe\uffff]")


def _xml_safe(text: str) -> str:
    return _XML_ILLEGAL.sub("\ufffd", text)


@dataclass(frozen=True)
class VerificationResult:
    identifier: str
    status: Status
    permanent_link: str | None = None
    detail: str = ""

    def __post_init__(self):
        if (self.status is Status.VALID) != (self.permanent_link is not None):
            raise ValueError("permanent_link must be present exactly for valid results")

    def to_element(self) -> ET.Element:
        attrs = {"id": _xml_safe(self.identifier), "status": self.status.value}
        if self.permanent_link is not None:
            attrs["link"] = self.permanent_link
        if self.detail:
            attrs["detail"] = _xml_safe(self.detail)
        return ET.Element("result", attrs)

    @classmethod
    def from_element(cls, elem) -> "VerificationResult":
        return cls(
            identifier=elem.get("id", ""),
            status=Status(elem.get("status")),
            permanent_link=elem.get("link"),
            detail=elem.get("detail", ""),
        )


def make_permanent_link(resolver_base_url: str, identifier: str) -> str:
    return resolver_base_url.rstrip("/") + "/link?id=" + quote(identifier, safe="")


def local_query_url(endpoint: str, facility: str, private_id: str) -> str:
    sep = "&" if "?" in endpoint else "?"
    return endpoint + sep + urlencode({"facility": facility, "private": private_id}, quote_via=quote)


class MasterVerifier:
    def __init__(
        self,
        registry: ProfileRegistry,
        resolver_base_url: str,
        *,
        client: HttpClient = http_get,
        remote_timeout: float = DEFAULT_REMOTE_TIMEOUT,
        batch_cap: int = DEFAULT_BATCH_CAP,
        max_workers: int = 16,
    ):
        self.registry = registry
        self.resolver_base_url = resolver_base_url.rstrip("/")
        self.client = client
        self.remote_timeout = remote_timeout
        self.batch_cap = batch_cap
        self.max_workers = max_workers

    def make_permanent_link(self, identifier: str) -> str:
        return make_permanent_link(self.resolver_base_url, identifier)

    def _ask_center(self, table, ident, down: set[str] | None = None) -> tuple[Status, str]:
        """Status and detail from the owning center; never raises.

        ``down`` collects centers that failed at transport level during one
        batch so later identifiers for them do not wait out the timeout again.
        """
        facility, private = dataset_key(ident)
        try:
            profile = table.route(facility)
        except UnknownFacility:
            return Status.UNKNOWN_FACILITY, f"no data center serves facility {facility!r}"
        if down is not None and profile.center_id in down:
            return Status.CENTER_UNAVAILABLE, f"{profile.center_id} unreachable earlier in this batch"
        url = local_query_url(profile.verifier_url, facility, private)
        try:
            resp = get_with_retry(self.client, url, self.remote_timeout)
        except TransportError as exc:
            if down is not None:
                down.add(profile.center_id)
            return Status.CENTER_UNAVAILABLE, f"{profile.center_id} unreachable: {exc}"
        if resp.status == 404:
            # the center disowns a facility the routing table gave it
            return Status.CENTER_UNAVAILABLE, f"{profile.center_id} does not serve {facility!r} (profile skew)"
        if resp.status != 200:
            return Status.CENTER_UNAVAILABLE, f"{profile.center_id} answered HTTP {resp.status}"
        try:
            verdict = SafeET.fromstring(resp.body)
        except (ET.ParseError, DefusedXmlException):
            return Status.CENTER_UNAVAILABLE, f"{profile.center_id} sent an unreadable verdict"
        status = verdict.get("status")
        if status == "valid":
            return Status.VALID, f"held by {profile.center_id}"
        if status == "notfound":
            return Status.NOT_FOUND, f"{profile.center_id} has no dataset {private!r}"
        return Status.CENTER_UNAVAILABLE, f"{profile.center_id} sent verdict {status!r}"

    def _result(self, identifier: str, outcome: tuple[Status, str]) -> VerificationResult:
        status, detail = outcome
        link = self.make_permanent_link(format_identifier(parse(identifier))) if status is Status.VALID else None
        return VerificationResult(identifier, status, link, detail)

    def verify(self, identifier: str) -> VerificationResult:
        try:
            ident = parse(identifier)
        except IdentifierError as exc:
            return VerificationResult(identifier, Status.INVALID_SYNTAX, None, str(exc))
        return self._result(identifier, self._ask_center(self.registry.snapshot(), ident))

    def verify_batch(self, identifiers: list[str]) -> list[VerificationResult]:
        if len(identifiers) > self.batch_cap:
            raise BatchTooLarge(f"{len(identifiers)} identifiers exceeds the cap of {self.batch_cap}")
        table = self.registry.snapshot()
        parsed: list = []
        unique: dict[tuple[str, str], object] = {}
        for text in identifiers:
            try:
                ident = parse(text)
            except IdentifierError as exc:
                parsed.append(exc)
                continue
            parsed.append(ident)
            unique.setdefault(dataset_key(ident), ident)

        outcomes: dict[tuple[str, str], tuple[Status, str]] = {}
        if unique:
            workers = max(1, min(self.max_workers, len(unique)))
            down: set[str] = set()
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {key: pool.submit(self._ask_center, table, ident, down) for key, ident in unique.items()}
            outcomes = {key: f.result() for key, f in futures.items()}

        results = []
        for text, item in zip(identifiers, parsed):
            if isinstance(item, IdentifierError):
                results.append(VerificationResult(text, Status.INVALID_SYNTAX, None, str(item)))
            else:
                results.append(self._result(text, outcomes[dataset_key(item)]))
        return results


def results_to_xml(results: list[VerificationResult]) -> bytes:
    root = ET.Element("results")
    root.extend(r.to_element() for r in results)
    return ET.tostring(root, encoding="utf-8") + b"\n"


class VerifierApp(App):
    """``GET /verify?id=`` for one identifier, ``POST /verify`` for a newline-separated batch."""

    def __init__(self, verifier: MasterVerifier):
        super().__init__()
        self.verifier = verifier
        self.route("GET", "/verify", self._get)
        self.route("POST", "/verify", self._post)

    def _get(self, request: Request) -> Response:
        if "id" not in request.query:
            return text_response(400, "missing id parameter\n")
        result = self.verifier.verify(request.query["id"])
        return Response(200, ET.tostring(result.to_element(), encoding="utf-8") + b"\n", XML)

    def _post(self, request: Request) -> Response:
        try:
            text = request.body.decode("utf-8")
        except UnicodeDecodeError:
            return text_response(400, "body is not UTF-8\n")
        identifiers = text.splitlines()
        try:
            results = self.verifier.verify_batch(identifiers)
        except BatchTooLarge as exc:
            return text_response(413, f"{exc}\n")
        return Response(200, results_to_xml(results), XML)


class VerifierUnreachable(ConnectionError):
    pass


class RemoteVerifier:
    """Client for a master verifier's HTTP interface."""

    def __init__(self, url: str, *, timeout: float = 60.0, batch_cap: int = DEFAULT_BATCH_CAP):
        self.url = url.rstrip("/")
        if not self.url.endswith("/verify"):
            self.url += "/verify"
        self.timeout = timeout
        self.batch_cap = batch_cap

    def verify_batch(self, identifiers: list[str]) -> list[VerificationResult]:
        results: list[VerificationResult] = []
        for start in range(0, len(identifiers), self.batch_cap):
            chunk = identifiers[start : start + self.batch_cap]
            body = "".join(i + "\n" for i in chunk).encode("utf-8")
            try:
                resp = http_request(
                    "POST", self.url, body=body, headers={"Content-Type": "text/plain; charset=utf-8"},
                    timeout=self.timeout,
                )
            except TransportError as exc:
                raise VerifierUnreachable(str(exc)) from exc
            if resp.status != 200:
                raise VerifierUnreachable(f"verifier answered HTTP {resp.status}")
            try:
                root = SafeET.fromstring(resp.body)
            except (ET.ParseError, DefusedXmlException) as exc:
                raise VerifierUnreachable(f"unreadable verifier response: {exc}") from exc
            got = [VerificationResult.from_element(e) for e in root.findall("result")]
            if len(got) != len(chunk):
                raise VerifierUnreachable(f"verifier returned {len(got)} results for {len(chunk)} identifiers")
            results.extend(got)
        return results
