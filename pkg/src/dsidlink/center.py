"""What a participating data center runs: an inventory plus three endpoints.

* ``GET /verify?facility=F&private=P``  ->  ``<verdict status="valid|notfound" url="..."/>``
* ``GET /resolve?facility=F&private=P`` ->  302 to the dataset's current URL, or 404
* ``GET /.well-known/dsid-profile.xml``  ->  the center's profile document

Records can be inserted, have their URL updated, or be handed to another
center wholesale; there is deliberately no way to delete one.
"""

from __future__ import annotations

import enum
import hashlib
import os
import threading
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable

from .clock import format_rfc3339, parse_rfc3339, utc_now
from .identifier import is_facility_token, is_private_id, normalize_facility
from .registry import PROFILE_PATH, _is_http_url, profile_to_xml
from .web import XML, App, Request, Response, redirect, text_response


class FacilityNotServed(LookupError):
    pass


class RecordNotFound(LookupError):
    pass


class DuplicateRecord(ValueError):
    pass


class InventoryFormatError(ValueError):
    pass


@dataclass(frozen=True)
class InventoryRecord:
    facility_id: str
    private_id: str
    current_url: str
    created_at: datetime

    @property
    def key(self) -> tuple[str, str]:
        return self.facility_id, self.private_id

    def to_line(self) -> str:
        return f"{self.facility_id}\t{self.private_id}\t{self.current_url}\t{format_rfc3339(self.created_at)}\n"


class VerdictStatus(enum.Enum):
    VALID = "valid"
    NOT_FOUND = "notfound"


@dataclass(frozen=True)
class LocalVerdict:
    status: VerdictStatus
    current_url: str | None = None

    def __post_init__(self):
        if (self.status is VerdictStatus.VALID) != (self.current_url is not None):
            raise ValueError("current_url must be present exactly for valid verdicts")

    def to_xml(self) -> bytes:
        attrs = {"status": self.status.value}
        if self.current_url is not None:
            attrs["url"] = self.current_url
        return ET.tostring(ET.Element("verdict", attrs), encoding="utf-8", xml_declaration=False) + b"\n"


def read_inventory(path: str | os.PathLike) -> list[InventoryRecord]:
    """Replay an inventory file; a later line for the same key replaces the earlier one."""
    records: dict[tuple[str, str], InventoryRecord] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.endswith("\n"):
                raise InventoryFormatError(f"{path}:{lineno}: truncated line")
            parts = line[:-1].split("\t")
            if len(parts) != 4:
                raise InventoryFormatError(f"{path}:{lineno}: expected 4 tab-separated fields")
            facility, private, url, created = parts
            if not is_facility_token(facility) or facility != normalize_facility(facility):
                raise InventoryFormatError(f"{path}:{lineno}: bad facility {facility!r}")
            if not is_private_id(private):
                raise InventoryFormatError(f"{path}:{lineno}: bad private id {private!r}")
            if not _is_http_url(url):
                raise InventoryFormatError(f"{path}:{lineno}: bad url {url!r}")
            try:
                when = parse_rfc3339(created)
            except ValueError as exc:
                raise InventoryFormatError(f"{path}:{lineno}: {exc}") from exc
            records[(facility, private)] = InventoryRecord(facility, private, url, when)
    return sorted(records.values(), key=lambda r: r.key)


def write_inventory(path: str | os.PathLike, records: Iterable[InventoryRecord]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        for record in sorted(records, key=lambda r: r.key):
            fh.write(record.to_line())
    os.replace(tmp, path)


class DataCenter:
    """In-memory inventory with optional append-only persistence.

    Reads go against an immutable dict that writers replace wholesale, so a
    reader sees a record entirely or not at all.
    """

    def __init__(
        self,
        center_id: str,
        display_name: str | None = None,
        *,
        base_url: str = "http://127.0.0.1",
        facilities: Iterable[str] = (),
        inventory_path: str | os.PathLike | None = None,
        clock: Callable[[], datetime] = utc_now,
    ):
        if not is_facility_token(center_id):
            raise ValueError(f"bad center id {center_id!r}")
        self.center_id = center_id
        self.display_name = display_name or center_id
        self.base_url = base_url.rstrip("/")
        self.clock = clock
        self._configured: frozenset[str] = frozenset(normalize_facility(f) for f in facilities)
        self._records: dict[tuple[str, str], InventoryRecord] = {}
        self._write_lock = threading.Lock()
        self.inventory_path = Path(inventory_path) if inventory_path is not None else None
        if self.inventory_path is not None and self.inventory_path.exists():
            self._records = {r.key: r for r in read_inventory(self.inventory_path)}

    # -- reads

    @property
    def facilities(self) -> frozenset[str]:
        return self._configured | {f for f, _ in self._records}

    def _check_served(self, facility: str) -> None:
        if facility not in self.facilities:
            raise FacilityNotServed(f"{self.center_id} does not serve facility {facility!r}")

    def verify_local(self, facility: str, private_id: str) -> LocalVerdict:
        self._check_served(facility)
        record = self._records.get((facility, private_id))
        if record is None:
            return LocalVerdict(VerdictStatus.NOT_FOUND)
        return LocalVerdict(VerdictStatus.VALID, record.current_url)

    def current_link(self, facility: str, private_id: str) -> str:
        self._check_served(facility)
        record = self._records.get((facility, private_id))
        if record is None:
            raise RecordNotFound(f"{facility}#{private_id}")
        return record.current_url

    def export_inventory(self, facility: str) -> list[InventoryRecord]:
        self._check_served(facility)
        records = self._records
        return sorted((r for r in records.values() if r.facility_id == facility), key=lambda r: r.private_id)

    def all_records(self) -> list[InventoryRecord]:
        return sorted(self._records.values(), key=lambda r: r.key)

    def serve_profile(self) -> bytes:
        return profile_to_xml(
            self.center_id,
            self.display_name,
            self.base_url + "/verify",
            self.base_url + "/resolve",
            self.facilities,
        )

    # -- writes

    def _append(self, records: Iterable[InventoryRecord]) -> None:
        if self.inventory_path is None:
            return
        with open(self.inventory_path, "a", encoding="utf-8", newline="") as fh:
            for record in records:
                fh.write(record.to_line())

    def _publish(self, records: dict[tuple[str, str], InventoryRecord]) -> None:
        self._records = records

    def insert(self, facility: str, private_id: str, url: str) -> InventoryRecord:
        facility = normalize_facility(facility)
        if not is_facility_token(facility):
            raise ValueError(f"bad facility {facility!r}")
        if not is_private_id(private_id):
            raise ValueError(f"bad private id {private_id!r}")
        if not _is_http_url(url):
            raise ValueError(f"not an absolute http(s) URL: {url!r}")
        with self._write_lock:
            if (facility, private_id) in self._records:
                raise DuplicateRecord(f"{facility}#{private_id} already in {self.center_id}")
            record = InventoryRecord(facility, private_id, url, self.clock())
            self._append([record])
            self._publish({**self._records, record.key: record})
            return record

    def update_url(self, facility: str, private_id: str, url: str) -> InventoryRecord:
        if not _is_http_url(url):
            raise ValueError(f"not an absolute http(s) URL: {url!r}")
        with self._write_lock:
            old = self._records.get((facility, private_id))
            if old is None:
                raise RecordNotFound(f"{facility}#{private_id}")
            record = replace(old, current_url=url)
            self._append([record])
            self._publish({**self._records, record.key: record})
            return record

    def serve_facility(self, facility: str) -> None:
        """Declare a facility even before any records exist for it."""
        with self._write_lock:
            self._configured = self._configured | {normalize_facility(facility)}

    def import_records(self, records: Iterable[InventoryRecord]) -> int:
        records = list(records)
        with self._write_lock:
            clashes = [r.key for r in records if r.key in self._records]
            if clashes:
                raise DuplicateRecord(f"{len(clashes)} records already present in {self.center_id}")
            self._append(records)
            self._publish({**self._records, **{r.key: r for r in records}})
            return len(records)

    def hand_off(self, facility: str) -> list[InventoryRecord]:
        """Stop serving ``facility`` and return its records for import elsewhere."""
        with self._write_lock:
            self._check_served(facility)
            moved = sorted((r for r in self._records.values() if r.facility_id == facility), key=lambda r: r.key)
            kept = {k: r for k, r in self._records.items() if r.facility_id != facility}
            self._configured = self._configured - {facility}
            self._publish(kept)
            if self.inventory_path is not None:
                write_inventory(self.inventory_path, kept.values())
            return moved

    def compact(self) -> None:
        if self.inventory_path is not None:
            with self._write_lock:
                write_inventory(self.inventory_path, self._records.values())


class CenterApp(App):
    """HTTP face of a :class:`DataCenter`; counts requests per endpoint."""

    def __init__(self, center: DataCenter):
        super().__init__()
        self.center = center
        self.requests: Counter[str] = Counter()
        self._count_lock = threading.Lock()
        self.stall: threading.Event | None = None
        self.route("GET", "/verify", self._verify)
        self.route("GET", "/resolve", self._resolve)
        self.route("GET", PROFILE_PATH, self._profile)

    def handle(self, request: Request) -> Response:
        with self._count_lock:
            self.requests[request.path] += 1
        stall = self.stall
        if stall is not None:
            stall.wait()
        return super().handle(request)

    def _args(self, request: Request) -> tuple[str, str] | Response:
        facility = request.query.get("facility", "")
        private = request.query.get("private", "")
        if not is_facility_token(facility):
            return text_response(400, "bad facility\n")
        if not is_private_id(private):
            return text_response(400, "bad private id\n")
        return normalize_facility(facility), private

    def _verify(self, request: Request) -> Response:
        args = self._args(request)
        if isinstance(args, Response):
            return args
        try:
            verdict = self.center.verify_local(*args)
        except FacilityNotServed as exc:
            return Response(404, str(exc).encode() + b"\n", headers=[("X-Dsid-Error", "facility-not-served")])
        return Response(200, verdict.to_xml(), XML)

    def _resolve(self, request: Request) -> Response:
        args = self._args(request)
        if isinstance(args, Response):
            return args
        try:
            return redirect(self.center.current_link(*args))
        except FacilityNotServed as exc:
            return Response(404, str(exc).encode() + b"\n", headers=[("X-Dsid-Error", "facility-not-served")])
        except RecordNotFound:
            return Response(404, b"not found\n", headers=[("X-Dsid-Error", "not-found")])

    def _profile(self, request: Request) -> Response:
        body = self.center.serve_profile()
        etag = '"' + hashlib.sha256(body).hexdigest()[:32] + '"'
        if request.headers.get("if-none-match") == etag:
            return Response(304, b"", XML, [("ETag", etag)])
        return Response(200, body, XML, [("ETag", etag)])
