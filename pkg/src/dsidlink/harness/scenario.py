"""Scenario files: one event per line, keyword first.

::

    # topology and settings come first
    config cache_ttl=3600 stale_serve=true remote_timeout=5
    center MAST hst,fuse
    center IRSA iras
    seed MAST hst hst.07442 http://mast.example/hst/07442

    # events
    publish                                   # verify every seeded id, keep its permanent link
    update-url hst hst.07442 http://mast.example/v2/hst/07442
    migrate iras IRSA MAST
    quiesce                                   # expire caches, refresh profiles
    check-permanence                          # every published link -> 302 to its current URL
    resolve ADS/HST#hst.07442 expect=redirect
    verify ADS/HST#nope expect=not-found
    kill MAST
    & verify ADS/HST#hst.07442 expect=center-unavailable within=5.1
    revive MAST
    ingest UCP 2006ApJ...1A ADS/HST#hst.07442 expect=inserted:1,updated:0,rejected:0
    harvest facility=hst expect=lines:1

A line starting with ``&`` runs concurrently with the event before it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..identifier import is_facility_token, is_private_id, normalize_facility
from .federation import CenterSpec, FederationSettings

RESOLVE_STATUSES = {"redirect", "redirect-stale", "invalid-syntax", "unknown-facility", "not-found", "center-unavailable"}
VERIFY_STATUSES = {"valid", "invalid-syntax", "unknown-facility", "not-found", "center-unavailable"}

EVENT_KEYWORDS = {
    "advance", "update-url", "migrate", "kill", "hang", "revive", "refresh", "quiesce", "publish",
    "check-permanence", "resolve", "verify", "ingest", "harvest",
}
PARALLEL_KEYWORDS = {"resolve", "verify"}


class ScenarioInvalid(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class Seed:
    center_id: str
    facility: str
    private_id: str
    url: str


@dataclass
class Event:
    index: int
    line: int
    keyword: str
    args: list[str]
    options: dict[str, str] = field(default_factory=dict)
    parallel: bool = False

    @property
    def expect(self) -> str | None:
        return self.options.get("expect")

    def text(self) -> str:
        parts = [self.keyword, *self.args, *(f"{k}={v}" for k, v in self.options.items())]
        return ("& " if self.parallel else "") + " ".join(parts)


@dataclass
class Scenario:
    centers: list[CenterSpec] = field(default_factory=list)
    seeds: list[Seed] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    settings: FederationSettings = field(default_factory=FederationSettings)
    name: str = "scenario"

    def groups(self) -> list[list[Event]]:
        """Events batched so that ``&``-marked ones share a group with their predecessor."""
        out: list[list[Event]] = []
        for event in self.events:
            if event.parallel and out:
                out[-1].append(event)
            else:
                out.append([event])
        return out


_SETTING_TYPES = {
    "cache_ttl": float,
    "remote_timeout": float,
    "refresh_interval": float,
    "staleness_horizon": float,
    "batch_cap": int,
    "stale_serve": lambda v: {"true": True, "false": False}[v.lower()],
}


def _split_options(tokens: list[str]) -> tuple[list[str], dict[str, str]]:
    args, options = [], {}
    for tok in tokens:
        key, eq, value = tok.partition("=")
        if eq and key in ("expect", "within", "facility", "since"):
            options[key] = value
        else:
            args.append(tok)
    return args, options


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    scenario = Scenario(name=name)
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parallel = stripped.startswith("&")
        if parallel:
            stripped = stripped[1:].strip()
        # identifiers and URLs never contain whitespace or start with '#'
        tokens = stripped.split()
        for k, tok in enumerate(tokens):
            if tok.startswith("#"):
                del tokens[k:]
                break
        if not tokens:
            continue
        keyword, rest = tokens[0], tokens[1:]

        if keyword == "config":
            for tok in rest:
                key, eq, value = tok.partition("=")
                if not eq or key not in _SETTING_TYPES:
                    raise ScenarioInvalid(lineno, f"unknown setting {tok!r}")
                try:
                    setattr(scenario.settings, key, _SETTING_TYPES[key](value))
                except (ValueError, KeyError) as exc:
                    raise ScenarioInvalid(lineno, f"bad value for {key}: {value!r}") from exc
        elif keyword == "center":
            if len(rest) not in (1, 2):
                raise ScenarioInvalid(lineno, "usage: center <ID> [facility,facility,...]")
            facilities = tuple(normalize_facility(f) for f in rest[1].split(",")) if len(rest) == 2 else ()
            scenario.centers.append(CenterSpec(rest[0], facilities))
        elif keyword == "seed":
            if len(rest) != 4:
                raise ScenarioInvalid(lineno, "usage: seed <center> <facility> <private_id> <url>")
            scenario.seeds.append(Seed(rest[0], normalize_facility(rest[1]), rest[2], rest[3]))
        elif keyword in EVENT_KEYWORDS:
            args, options = _split_options(rest)
            if parallel and keyword not in PARALLEL_KEYWORDS:
                raise ScenarioInvalid(lineno, f"{keyword} cannot run in parallel")
            scenario.events.append(Event(len(scenario.events), lineno, keyword, args, options, parallel))
        else:
            raise ScenarioInvalid(lineno, f"unknown keyword {keyword!r}")
    validate(scenario)
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), path.stem)


def _need(event: Event, count: int, usage: str) -> None:
    if len(event.args) != count:
        raise ScenarioInvalid(event.line, f"usage: {usage}")


def validate(scenario: Scenario) -> None:
    """Check references by replaying ownership symbolically; raises :class:`ScenarioInvalid`."""
    owner: dict[str, str] = {}
    ids = set()
    for spec in scenario.centers:
        if not is_facility_token(spec.center_id) or spec.center_id in ids:
            raise ScenarioInvalid(0, f"bad or duplicate center id {spec.center_id!r}")
        ids.add(spec.center_id)
        for facility in spec.facilities:
            if not is_facility_token(facility):
                raise ScenarioInvalid(0, f"bad facility {facility!r}")
            if facility in owner:
                raise ScenarioInvalid(0, f"facility {facility} declared by {owner[facility]} and {spec.center_id}")
            owner[facility] = spec.center_id

    seeded: set[tuple[str, str]] = set()
    for seed in scenario.seeds:
        if seed.center_id not in ids:
            raise ScenarioInvalid(0, f"seed for undeclared center {seed.center_id}")
        if owner.get(seed.facility, seed.center_id) != seed.center_id:
            raise ScenarioInvalid(0, f"facility {seed.facility} belongs to {owner[seed.facility]}")
        if not is_private_id(seed.private_id):
            raise ScenarioInvalid(0, f"bad private id {seed.private_id!r}")
        if (seed.facility, seed.private_id) in seeded:
            raise ScenarioInvalid(0, f"duplicate seed {seed.facility}#{seed.private_id}")
        owner[seed.facility] = seed.center_id
        seeded.add((seed.facility, seed.private_id))

    for event in scenario.events:
        kw, args = event.keyword, event.args
        if kw in ("refresh", "quiesce", "publish", "check-permanence"):
            _need(event, 0, kw)
        elif kw == "advance":
            _need(event, 1, "advance <seconds>")
            try:
                if float(args[0]) < 0:
                    raise ValueError
            except ValueError:
                raise ScenarioInvalid(event.line, "advance needs a non-negative number of seconds") from None
        elif kw in ("kill", "hang", "revive"):
            _need(event, 1, f"{kw} <center>")
            if args[0] not in ids:
                raise ScenarioInvalid(event.line, f"undeclared center {args[0]}")
        elif kw == "update-url":
            _need(event, 3, "update-url <facility> <private_id> <url>")
            if (normalize_facility(args[0]), args[1]) not in seeded:
                raise ScenarioInvalid(event.line, f"update of unseeded dataset {args[0]}#{args[1]}")
        elif kw == "migrate":
            _need(event, 3, "migrate <facility> <from> <to>")
            facility, src, dst = normalize_facility(args[0]), args[1], args[2]
            if src not in ids or dst not in ids:
                raise ScenarioInvalid(event.line, "migrate between undeclared centers")
            if owner.get(facility) != src:
                raise ScenarioInvalid(event.line, f"{src} does not hold {facility} at this point")
            owner[facility] = dst
        elif kw in ("resolve", "verify"):
            _need(event, 1, f"{kw} <identifier>")
            allowed = RESOLVE_STATUSES if kw == "resolve" else VERIFY_STATUSES
            if event.expect is not None and event.expect.split(":", 1)[0] not in allowed:
                raise ScenarioInvalid(event.line, f"unknown expectation {event.expect!r}")
        elif kw == "ingest":
            if len(args) < 2:
                raise ScenarioInvalid(event.line, "usage: ingest <source> <article> <dataset>...")
        elif kw == "harvest":
            _need(event, 0, "harvest [facility=F] [since=T] [expect=lines:N]")
