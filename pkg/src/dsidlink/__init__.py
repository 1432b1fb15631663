"""Permanent dataset identifiers with federated verification, link resolution and correlation harvesting."""

from .identifier import DatasetIdentifier, IdentifierError, ParseErrorKind, format_identifier, normalize_facility, parse

__all__ = [
    "DatasetIdentifier",
    "IdentifierError",
    "ParseErrorKind",
    "format_identifier",
    "normalize_facility",
    "parse",
]
