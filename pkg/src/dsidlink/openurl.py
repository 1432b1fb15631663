"""Library "OpenURL settings" links of the form::

    http://adsabs.harvard.edu/cgi-bin/pref_set?4&OpenURL=serverURL&Icon=iconURL

Parameter names are matched exactly (``openurl`` is not ``OpenURL``).  An icon
given without a scheme is resolved against the server URL, treated as a
directory.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from urllib.parse import quote, unquote, urljoin, urlsplit, urlunsplit

DEFAULT_BASE = "http://adsabs.harvard.edu"
PREF_PATH = "/cgi-bin/pref_set"
PAGE_TOKEN = "4"


class PrefErrorKind(enum.Enum):
    MISSING_OPENURL = "MissingOpenURL"
    BAD_SERVER_URL = "BadServerUrl"
    BAD_ICON_RESOLUTION = "BadIconResolution"


class PrefError(ValueError):
    def __init__(self, kind: PrefErrorKind, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind.value}: {detail}" if detail else kind.value)


@dataclass(frozen=True)
class OpenUrlSettings:
    server_url: str
    icon_url: str | None = None


def _absolute(url: str) -> bool:
    parts = urlsplit(url)
    return parts.scheme in ("http", "https") and bool(parts.netloc)


def resolve_icon(server_url: str, icon: str) -> str:
    if urlsplit(icon).scheme:
        if not _absolute(icon):
            raise PrefError(PrefErrorKind.BAD_ICON_RESOLUTION, icon)
        return icon
    parts = urlsplit(server_url)
    path = parts.path if parts.path.endswith("/") else parts.path + "/"
    base = urlunsplit((parts.scheme, parts.netloc, path, "", ""))
    resolved = urljoin(base, icon)
    if not _absolute(resolved):
        raise PrefError(PrefErrorKind.BAD_ICON_RESOLUTION, icon)
    return resolved


def parse_pref_link(url: str) -> OpenUrlSettings:
    # printed links are often wrapped; raw whitespace is never part of a URL
    url = "".join(url.split())
    params: dict[str, str] = {}
    for piece in urlsplit(url).query.split("&"):
        name, eq, value = piece.partition("=")
        if eq:
            params.setdefault(unquote(name), unquote(value))

    server = params.get("OpenURL")
    if not server:
        raise PrefError(PrefErrorKind.MISSING_OPENURL)
    if not _absolute(server):
        raise PrefError(PrefErrorKind.BAD_SERVER_URL, server)
    icon = params.get("Icon") or None
    return OpenUrlSettings(server, resolve_icon(server, icon) if icon else None)


def build_pref_link(settings: OpenUrlSettings, base: str = DEFAULT_BASE) -> str:
    link = f"{base.rstrip('/')}{PREF_PATH}?{PAGE_TOKEN}&OpenURL={quote(settings.server_url, safe='')}"
    if settings.icon_url:
        link += f"&Icon={quote(settings.icon_url, safe='')}"
    return link
