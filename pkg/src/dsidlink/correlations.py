"""Article <-> dataset correlations harvested from publishers and served to data centers.

Wire format, both directions: UTF-8 text, one ``article_id<TAB>dataset_id``
record per line.
"""

from __future__ import annotations

import os
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterable, Mapping

from .clock import format_rfc3339, parse_rfc3339, utc_now
from .identifier import (
    IdentifierError,
    dataset_key,
    format_identifier,
    is_facility_token,
    normalize_facility,
    parse,
)
from .web import XML, App, Request, Response, TEXT, text_response


class FeedUnreadable(ValueError):
    pass


@dataclass(frozen=True)
class Correlation:
    article_id: str
    dataset_id: str
    source: str
    recorded_at: datetime

    def line(self) -> str:
        return f"{self.article_id}\t{self.dataset_id}\n"


@dataclass
class IngestReport:
    inserted: int = 0
    updated: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)  # (line number, reason)

    def to_xml(self) -> bytes:
        root = ET.Element(
            "ingest", {"inserted": str(self.inserted), "updated": str(self.updated), "rejected": str(len(self.rejected))}
        )
        for lineno, reason in self.rejected:
            ET.SubElement(root, "reject", {"line": str(lineno), "reason": reason})
        return ET.tostring(root, encoding="utf-8") + b"\n"


Key = tuple[str, tuple[str, str]]  # article id, dataset key


@dataclass(frozen=True)
class _Snapshot:
    rows: Mapping[Key, Correlation]
    by_article: Mapping[str, frozenset[tuple[str, str]]]
    by_dataset: Mapping[tuple[str, str], frozenset[str]]


def _index(rows: Mapping[Key, Correlation]) -> _Snapshot:
    by_article: dict[str, set] = {}
    by_dataset: dict[tuple[str, str], set] = {}
    for article, dkey in rows:
        by_article.setdefault(article, set()).add(dkey)
        by_dataset.setdefault(dkey, set()).add(article)
    return _Snapshot(
        MappingProxyType(dict(rows)),
        MappingProxyType({k: frozenset(v) for k, v in by_article.items()}),
        MappingProxyType({k: frozenset(v) for k, v in by_dataset.items()}),
    )


def _check_line(line: str) -> tuple[str, str] | str:
    """(article, canonical dataset) or a reject reason."""
    article, tab, dataset = line.partition("\t")
    if not tab:
        return "MissingTab"
    if not article or any(c.isspace() for c in article):
        return "BadArticleId"
    try:
        return article, format_identifier(parse(dataset))
    except IdentifierError as exc:
        return exc.kind.value


class CorrelationStore:
    """Single writer, many readers; readers always see a complete snapshot.

    With ``log_path`` every accepted record is appended to a log
    (``recorded_at<TAB>source<TAB>article<TAB>dataset``) which is replayed on
    open and rewritten as a sorted snapshot by :meth:`compact`.
    """

    def __init__(self, *, log_path: str | os.PathLike | None = None, clock: Callable[[], datetime] = utc_now,
                 compact_ratio: int = 4):
        self.clock = clock
        self.log_path = Path(log_path) if log_path is not None else None
        self.compact_ratio = compact_ratio
        self._write_lock = threading.Lock()
        self._log_lines = 0
        rows: dict[Key, Correlation] = {}
        if self.log_path is not None and self.log_path.exists():
            rows = self._replay(self.log_path)
        self._snap = _index(rows)

    def _replay(self, path: Path) -> dict[Key, Correlation]:
        rows: dict[Key, Correlation] = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for line in fh:
                if not line.endswith("\n"):
                    break  # torn final write
                self._log_lines += 1
                recorded, source, article, dataset = line[:-1].split("\t")
                ident = parse(dataset)
                key = (article, dataset_key(ident))
                old = rows.get(key)
                rows[key] = Correlation(
                    article, old.dataset_id if old else dataset, source, parse_rfc3339(recorded)
                )
        return rows

    def __len__(self) -> int:
        return len(self._snap.rows)

    def ingest_feed(self, feed: bytes, source: str) -> IngestReport:
        if not is_facility_token(source):
            raise ValueError(f"bad source token {source!r}")
        try:
            text = feed.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FeedUnreadable(str(exc)) from exc

        report = IngestReport()
        with self._write_lock:
            now = self.clock()
            rows = dict(self._snap.rows)
            accepted: list[Correlation] = []
            for lineno, line in enumerate(text.split("\n"), 1):
                line = line.removesuffix("\r")
                if not line:
                    continue
                checked = _check_line(line)
                if isinstance(checked, str):
                    report.rejected.append((lineno, checked))
                    continue
                article, dataset = checked
                key = (article, dataset_key(parse(dataset)))
                old = rows.get(key)
                if old is None:
                    rows[key] = Correlation(article, dataset, source, now)
                    report.inserted += 1
                else:
                    rows[key] = replace(old, recorded_at=now)
                    report.updated += 1
                accepted.append(rows[key])
            self._append(accepted)
            self._snap = _index(rows)
            if self.log_path is not None and self._log_lines > self.compact_ratio * max(len(rows), 1):
                self._compact_locked()
        return report

    def _append(self, records: Iterable[Correlation]) -> None:
        if self.log_path is None:
            return
        lines = [f"{format_rfc3339(c.recorded_at)}\t{c.source}\t{c.article_id}\t{c.dataset_id}\n" for c in records]
        with open(self.log_path, "a", encoding="utf-8", newline="") as fh:
            fh.writelines(lines)
        self._log_lines += len(lines)

    def _compact_locked(self) -> None:
        tmp = self.log_path.with_name(self.log_path.name + ".tmp")
        rows = sorted(self._snap.rows.values(), key=lambda c: (c.article_id, c.dataset_id))
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            for c in rows:
                fh.write(f"{format_rfc3339(c.recorded_at)}\t{c.source}\t{c.article_id}\t{c.dataset_id}\n")
        os.replace(tmp, self.log_path)
        self._log_lines = len(rows)

    def compact(self) -> None:
        if self.log_path is not None:
            with self._write_lock:
                self._compact_locked()

    def correlations(self) -> list[Correlation]:
        return sorted(self._snap.rows.values(), key=lambda c: (c.article_id, c.dataset_id))

    def harvest(self, facility: str | None = None, since: datetime | None = None) -> bytes:
        """Line-format dump ordered by (article_id, dataset_id); ``facility=None`` means all."""
        return b"".join(line.encode("utf-8") for line in self.iter_harvest(facility, since))

    def iter_harvest(self, facility: str | None = None, since: datetime | None = None):
        if facility is not None:
            facility = normalize_facility(facility)
        for c in self.correlations():
            if facility is not None and normalize_facility(parse(c.dataset_id).facility_id) != facility:
                continue
            if since is not None and c.recorded_at < since:
                continue
            yield c.line()

    def lookup_article(self, article_id: str) -> list[str]:
        snap = self._snap
        keys = snap.by_article.get(article_id, ())
        return sorted(snap.rows[(article_id, k)].dataset_id for k in keys)

    def lookup_dataset(self, dataset_id: str) -> list[str]:
        dkey = dataset_key(parse(dataset_id))
        return sorted(self._snap.by_dataset.get(dkey, ()))

    def article_rows(self, article_id: str) -> list[Correlation]:
        snap = self._snap
        return sorted((snap.rows[(article_id, k)] for k in snap.by_article.get(article_id, ())),
                      key=lambda c: c.dataset_id)

    def dataset_rows(self, dataset_id: str) -> list[Correlation]:
        snap = self._snap
        dkey = dataset_key(parse(dataset_id))
        return sorted((snap.rows[(a, dkey)] for a in snap.by_dataset.get(dkey, ())), key=lambda c: c.article_id)


class CorrelationApp(App):
    def __init__(self, store: CorrelationStore):
        super().__init__()
        self.store = store
        self.route("PUT", "/feed", self._feed)
        self.route("GET", "/correlations", self._correlations)
        self.route("GET", "/article", self._article)
        self.route("GET", "/dataset", self._dataset)

    def _feed(self, request: Request) -> Response:
        source = request.query.get("source", "")
        if not is_facility_token(source):
            return text_response(400, "missing or bad source parameter\n")
        try:
            report = self.store.ingest_feed(request.body, source)
        except FeedUnreadable as exc:
            return text_response(400, f"feed is not UTF-8: {exc}\n")
        return Response(200, report.to_xml(), XML)

    def _correlations(self, request: Request) -> Response:
        facility = request.query.get("facility") or None
        if facility is not None and facility != "all" and not is_facility_token(facility):
            return text_response(400, "bad facility parameter\n")
        if facility == "all":
            facility = None
        since = None
        if request.query.get("since"):
            try:
                since = parse_rfc3339(request.query["since"])
            except ValueError:
                return text_response(400, "since must be an RFC 3339 timestamp\n")
        return Response(200, self.store.harvest(facility, since), TEXT)

    def _article(self, request: Request) -> Response:
        if "id" not in request.query:
            return text_response(400, "missing id parameter\n")
        rows = self.store.article_rows(request.query["id"])
        return Response(200, "".join(c.line() for c in rows).encode("utf-8"), TEXT)

    def _dataset(self, request: Request) -> Response:
        if "id" not in request.query:
            return text_response(400, "missing id parameter\n")
        try:
            rows = self.store.dataset_rows(request.query["id"])
        except IdentifierError as exc:
            return text_response(400, f"invalid-syntax: {exc}\n")
        return Response(200, "".join(c.line() for c in rows).encode("utf-8"), TEXT)
