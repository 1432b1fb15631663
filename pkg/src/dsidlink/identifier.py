"""Dataset identifiers of the form ``ADS/FacilityId#PrivateId``.

The facility token is the routing key (compared case-insensitively via
:func:`normalize_facility`); the private id belongs to the data center and is
opaque and case-sensitive.
"""

from __future__ import annotations

import enum
import string
from dataclasses import dataclass, field

AUTHORITY = "ADS"
FACILITY_MAX = 32
PRIVATE_MAX = 128

FACILITY_CHARS = frozenset(string.ascii_letters + string.digits + "._-")
# visible ASCII (0x21-0x7e) minus the separator
PRIVATE_CHARS = frozenset(chr(c) for c in range(0x21, 0x7F)) - {"#"}


class ParseErrorKind(enum.Enum):
    MISSING_AUTHORITY = "MissingAuthority"
    BAD_AUTHORITY = "BadAuthority"
    MISSING_SEPARATOR = "MissingSeparator"
    EMPTY_FACILITY = "EmptyFacility"
    BAD_FACILITY_CHAR = "BadFacilityChar"
    EMPTY_PRIVATE_ID = "EmptyPrivateId"
    BAD_PRIVATE_CHAR = "BadPrivateChar"
    TOO_LONG = "TooLong"


class IdentifierError(ValueError):
    """Raised by :func:`parse`; ``position`` is a UTF-8 byte offset into the input."""

    def __init__(self, kind: ParseErrorKind, position: int, text: str = ""):
        self.kind = kind
        self.position = position
        self.text = text
        super().__init__(f"{kind.value} at byte {position}: {text!r}")


@dataclass(frozen=True)
class DatasetIdentifier:
    facility_id: str
    private_id: str
    authority: str = field(default=AUTHORITY)

    def __post_init__(self):
        # constructing directly must not bypass the grammar
        parse(f"{self.authority}/{self.facility_id}#{self.private_id}")

    @property
    def facility_key(self) -> str:
        return normalize_facility(self.facility_id)

    def __str__(self) -> str:
        return format_identifier(self)


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


def parse(text: str) -> DatasetIdentifier:
    """Parse ``text`` strictly; the first violated rule (by position) is reported."""

    def fail(kind: ParseErrorKind, index: int):
        raise IdentifierError(kind, _byte_offset(text, index), text)

    slash = text.find("/")
    if slash < 0:
        fail(ParseErrorKind.MISSING_AUTHORITY, 0)
    if text[:slash] != AUTHORITY:
        fail(ParseErrorKind.BAD_AUTHORITY, 0)

    start = slash + 1
    i = start
    n = len(text)
    while i < n and text[i] != "#":
        if i - start >= FACILITY_MAX:
            fail(ParseErrorKind.TOO_LONG, i)
        if text[i] not in FACILITY_CHARS:
            fail(ParseErrorKind.BAD_FACILITY_CHAR, i)
        i += 1
    if i == n:
        fail(ParseErrorKind.MISSING_SEPARATOR, n)
    if i == start:
        fail(ParseErrorKind.EMPTY_FACILITY, start)
    facility = text[start:i]

    pstart = i + 1
    if pstart == n:
        fail(ParseErrorKind.EMPTY_PRIVATE_ID, n)
    for j in range(pstart, n):
        if j - pstart >= PRIVATE_MAX:
            fail(ParseErrorKind.TOO_LONG, j)
        if text[j] not in PRIVATE_CHARS:
            fail(ParseErrorKind.BAD_PRIVATE_CHAR, j)

    ident = object.__new__(DatasetIdentifier)
    object.__setattr__(ident, "facility_id", facility)
    object.__setattr__(ident, "private_id", text[pstart:])
    object.__setattr__(ident, "authority", AUTHORITY)
    return ident


def format_identifier(ident: DatasetIdentifier) -> str:
    return f"{AUTHORITY}/{ident.facility_id}#{ident.private_id}"


def canonical(text: str) -> str:
    """Parse then format; raises :class:`IdentifierError` on bad input."""
    return format_identifier(parse(text))


def normalize_facility(facility_id: str) -> str:
    """ASCII case fold used as the routing key."""
    return facility_id.lower()


def is_facility_token(token: str) -> bool:
    return 0 < len(token) <= FACILITY_MAX and all(c in FACILITY_CHARS for c in token)


def is_private_id(value: str) -> bool:
    return 0 < len(value) <= PRIVATE_MAX and all(c in PRIVATE_CHARS for c in value)


def dataset_key(ident: DatasetIdentifier) -> tuple[str, str]:
    """(normalized facility, private id): identity of the dataset itself."""
    return normalize_facility(ident.facility_id), ident.private_id
