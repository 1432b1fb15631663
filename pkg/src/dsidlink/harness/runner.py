from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from urllib.parse import quote

from defusedxml import ElementTree as SafeET

from ..identifier import dataset_key, format_identifier, parse
from ..web import HttpResponse, TransportError
from .federation import Federation
from .scenario import Event, Scenario


@dataclass
class ExpectationResult:
    event_index: int
    line: int
    event: str
    passed: bool
    detail: str = ""


@dataclass
class ScenarioReport:
    name: str
    results: list[ExpectationResult] = field(default_factory=list)
    traces: list[tuple[int, str, list[str]]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[ExpectationResult]:
        return [r for r in self.results if not r.passed]

    def to_text(self, traces: bool = True) -> str:
        ok = sum(r.passed for r in self.results)
        lines = [f"scenario {self.name}: {'PASS' if self.passed else 'FAIL'} ({ok}/{len(self.results)} expectations)"]
        for r in self.results:
            lines.append(f"[{'PASS' if r.passed else 'FAIL'}] #{r.event_index} line {r.line}: {r.event}")
            if r.detail:
                lines.append(f"       {r.detail}")
        if traces:
            lines.append("trace:")
            for index, text, calls in self.traces:
                lines.append(f"#{index} {text}")
                lines.extend(f"  {c}" for c in calls)
        return "\n".join(lines) + "\n"


def resolve_status(resp: HttpResponse) -> tuple[str, str | None]:
    if resp.status == 302:
        stale = (resp.header("x-resolver-stale") or "").lower() == "true"
        return ("redirect-stale" if stale else "redirect"), resp.header("location")
    if resp.status == 400:
        return "invalid-syntax", None
    if resp.status == 404:
        body = resp.body.decode("utf-8", "replace")
        return ("unknown-facility" if body.startswith("unknown-facility") else "not-found"), None
    if resp.status == 503:
        return "center-unavailable", None
    return f"http-{resp.status}", None


class ScenarioRunner:
    """Executes a :class:`Scenario` against a live :class:`Federation`.

    ``oracle`` is the harness's own record of where every seeded dataset
    lives (updated by ``update-url`` events), kept apart from the centers so it
    can judge them.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.oracle: dict[tuple[str, str], str] = {}
        self.identifiers: list[str] = []
        self.published: dict[str, str] = {}
        self.fed: Federation | None = None

    def run(self) -> ScenarioReport:
        report = ScenarioReport(self.scenario.name)
        with Federation(self.scenario.centers, self.scenario.settings) as fed:
            self.fed = fed
            for seed in self.scenario.seeds:
                fed.seed(seed.center_id, seed.facility, seed.private_id, seed.url)
                self.oracle[(seed.facility, seed.private_id)] = seed.url
                self.identifiers.append(f"ADS/{seed.facility.upper()}#{seed.private_id}")
            fed.refresh()
            report.traces.append((-1, "boot", fed.tracer.drain()))

            for group in self.scenario.groups():
                if len(group) == 1:
                    outcomes = [self._execute(group[0])]
                else:
                    with ThreadPoolExecutor(max_workers=len(group)) as pool:
                        outcomes = list(pool.map(self._execute, group))
                for results in outcomes:
                    report.results.extend(results)
                text = " || ".join(e.text() for e in group)
                report.traces.append((group[0].index, text, fed.tracer.drain()))
            self.fed = None
        return report

    # -- helpers

    def _result(self, event: Event, passed: bool, detail: str = "") -> ExpectationResult:
        return ExpectationResult(event.index, event.line, event.text(), passed, detail)

    def _get(self, url: str) -> HttpResponse:
        try:
            resp = self.fed.get(url)
        except TransportError:
            self.fed.tracer.record("GET", url, "unreachable")
            raise
        self.fed.tracer.record("GET", url, str(resp.status))
        return resp

    def _expected_target(self, identifier: str) -> str | None:
        try:
            return self.oracle.get(dataset_key(parse(identifier)))
        except ValueError:
            return None

    # -- events

    def _execute(self, event: Event) -> list[ExpectationResult]:
        fed = self.fed
        kw, args = event.keyword, event.args
        if kw == "advance":
            fed.advance(float(args[0]))
        elif kw == "refresh":
            fed.refresh()
        elif kw == "quiesce":
            fed.quiesce()
        elif kw == "kill":
            fed.kill(args[0])
        elif kw == "hang":
            fed.hang(args[0])
        elif kw == "revive":
            fed.revive(args[0])
        elif kw == "update-url":
            facility, private, url = args[0].lower(), args[1], args[2]
            fed.update_url(facility, private, url)
            self.oracle[(facility, private)] = url
        elif kw == "migrate":
            before = fed.inventory_multiset()
            fed.migrate(*args)
            conserved = fed.inventory_multiset() == before
            return [self._result(event, conserved, "" if conserved else "inventory changed during migration")]
        elif kw == "publish":
            return [self._publish(event)]
        elif kw == "check-permanence":
            return [self._check_permanence(event)]
        elif kw == "resolve":
            return self._resolve(event)
        elif kw == "verify":
            return self._verify(event)
        elif kw == "ingest":
            return self._ingest(event)
        elif kw == "harvest":
            return self._harvest(event)
        return []

    def _publish(self, event: Event) -> ExpectationResult:
        if not self.identifiers:
            return self._result(event, True)
        resp = self.fed.verify_batch_http(self.identifiers)
        self.fed.tracer.record("POST", f"{self.fed.hub_url}/verify", str(resp.status))
        if resp.status != 200:
            return self._result(event, False, f"verifier answered HTTP {resp.status}")
        bad = []
        for ident, elem in zip(self.identifiers, SafeET.fromstring(resp.body).findall("result")):
            link = elem.get("link")
            if elem.get("status") != "valid" or link != self.fed.permanent_link(ident):
                bad.append(f"{ident}={elem.get('status')}")
            else:
                self.published[ident] = link
        detail = f"{len(self.published)}/{len(self.identifiers)} published"
        if bad:
            detail += "; not valid: " + ", ".join(bad[:5])
        return self._result(event, not bad, detail)

    def _check_permanence(self, event: Event) -> ExpectationResult:
        wrong = []
        for ident, link in self.published.items():
            try:
                status, target = resolve_status(self._get(link))
            except TransportError:
                status, target = "unreachable", None
            expected = self._expected_target(ident)
            if status != "redirect" or target != expected:
                wrong.append(f"{ident}: {status} {target}")
        ok = len(self.published) - len(wrong)
        detail = f"{ok}/{len(self.published)} permanent links redirect to the current location"
        if wrong:
            detail += "; " + "; ".join(wrong[:5])
        return self._result(event, not wrong and bool(self.published), detail)

    def _resolve(self, event: Event) -> list[ExpectationResult]:
        identifier = event.args[0]
        started = time.monotonic()
        try:
            status, target = resolve_status(self._get(self.fed.permanent_link(identifier)))
        except TransportError:
            status, target = "unreachable", None
        elapsed = time.monotonic() - started
        return self._judge(event, status, target, elapsed)

    def _verify(self, event: Event) -> list[ExpectationResult]:
        identifier = event.args[0]
        started = time.monotonic()
        try:
            resp = self._get(f"{self.fed.hub_url}/verify?id={quote(identifier, safe='')}")
            elem = SafeET.fromstring(resp.body)
            status, link = elem.get("status"), elem.get("link")
        except (TransportError, SafeET.ParseError):
            status, link = "unreachable", None
        elapsed = time.monotonic() - started
        results = self._judge(event, status, None, elapsed)
        if results and status == "valid" and event.expect == "valid":
            expected = self.fed.permanent_link(format_identifier(parse(identifier)))
            if link != expected:
                results[0] = self._result(event, False, "permanent link does not point at the resolver")
        return results

    def _judge(self, event: Event, status: str, target: str | None, elapsed: float) -> list[ExpectationResult]:
        if event.expect is None:
            return []
        want, _, want_target = event.expect.partition(":")
        problems = []
        if status != want:
            problems.append(f"got {status}")
        elif want.startswith("redirect"):
            expected = want_target or self._expected_target(event.args[0])
            if target != expected:
                problems.append(f"redirected to {target}, expected {expected}")
        if "within" in event.options and elapsed > float(event.options["within"]):
            problems.append(f"took longer than {event.options['within']} s")
        return [self._result(event, not problems, "; ".join(problems))]

    def _ingest(self, event: Event) -> list[ExpectationResult]:
        source, article, datasets = event.args[0], event.args[1], event.args[2:]
        feed = "".join(f"{article}\t{d}\n" for d in datasets).encode("utf-8")
        resp = self.fed.ingest_http(source, feed)
        self.fed.tracer.record("PUT", f"{self.fed.hub_url}/feed?source={source}", str(resp.status))
        if event.expect is None:
            return []
        if resp.status != 200:
            return [self._result(event, False, f"HTTP {resp.status}")]
        got = SafeET.fromstring(resp.body).attrib
        problems = []
        for pair in event.expect.split(","):
            key, _, value = pair.partition(":")
            if got.get(key) != value:
                problems.append(f"{key}={got.get(key)}")
        return [self._result(event, not problems, ", ".join(problems))]

    def _harvest(self, event: Event) -> list[ExpectationResult]:
        resp = self.fed.harvest_http(event.options.get("facility"), event.options.get("since"))
        self.fed.tracer.record("GET", f"{self.fed.hub_url}/correlations", str(resp.status))
        if event.expect is None:
            return []
        key, _, value = event.expect.partition(":")
        lines = resp.body.decode("utf-8").splitlines() if resp.status == 200 else []
        if key != "lines":
            return [self._result(event, False, f"unknown harvest expectation {event.expect!r}")]
        ok = resp.status == 200 and len(lines) == int(value)
        return [self._result(event, ok, "" if ok else f"HTTP {resp.status}, {len(lines)} lines")]


def run(scenario: Scenario) -> ScenarioReport:
    return ScenarioRunner(scenario).run()
