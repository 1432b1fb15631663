from datetime import timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsidlink.clock import SimClock
from dsidlink.resolver import STALE_HEADER, LinkResolver, Outcome, ResolverApp
from tests.helpers import InProcessNet, call, small_federation


@pytest.fixture
def fed():
    net = InProcessNet()
    clock = SimClock()
    centers, registry = small_federation(net, clock)
    resolver = LinkResolver(registry, client=net, clock=clock, cache_ttl=3600, remote_timeout=0.3)
    return net, clock, centers, registry, resolver


def resolve_calls(app):
    return app.requests["/resolve"]


def test_seeded_identifier_redirects(fed):
    *_, resolver = fed
    outcome = resolver.resolve("ADS/HST#hst.07442")
    assert outcome.status is Outcome.REDIRECT
    assert outcome.target == "http://mast.example/data/hst.07442"
    assert not outcome.stale


@pytest.mark.parametrize("identifier, status", [
    ("ADS/HST", Outcome.INVALID_SYNTAX),
    ("ADS/NOPE#x", Outcome.UNKNOWN_FACILITY),
    ("ADS/HST#absent", Outcome.NOT_FOUND),
])
def test_failures(fed, identifier, status):
    *_, resolver = fed
    assert resolver.resolve(identifier).status is status


def test_cache_hit_makes_no_remote_call(fed):
    _, _, centers, _, resolver = fed
    app = centers["MAST"][1]
    resolver.resolve("ADS/HST#hst.07442")
    resolver.resolve("ADS/HST#hst.07442")
    assert resolve_calls(app) == 1


def test_update_visible_after_expiry(fed):
    _, clock, centers, _, resolver = fed
    resolver.resolve("ADS/HST#hst.07442")
    centers["MAST"][0].update_url("hst", "hst.07442", "http://mast.example/new")
    clock.advance(3599)
    assert resolver.resolve("ADS/HST#hst.07442").target == "http://mast.example/data/hst.07442"
    clock.advance(1)
    assert resolver.resolve("ADS/HST#hst.07442").target == "http://mast.example/new"


def test_invalidate_forces_remote_call(fed):
    _, _, centers, _, resolver = fed
    app = centers["MAST"][1]
    resolver.resolve("ADS/HST#hst.07442")
    resolver.invalidate("ADS/HST#hst.07442")
    resolver.invalidate("ADS/HST#hst.07442")
    resolver.invalidate("ADS/HST#never-cached")
    resolver.invalidate("garbage")
    resolver.resolve("ADS/HST#hst.07442")
    assert resolve_calls(app) == 2


def test_migration_redirects_via_new_center(fed):
    _, clock, centers, registry, resolver = fed
    mast, cxc = centers["MAST"][0], centers["CXC"][0]
    assert resolver.resolve("ADS/FUSE#f1").target == "http://mast.example/data/f1"
    cxc.serve_facility("fuse")
    cxc.import_records(mast.hand_off("fuse"))
    cxc.update_url("fuse", "f1", "http://cxc.example/data/f1")
    registry.refresh()
    # the cached entry belongs to MAST, so the new route bypasses it at once
    outcome = resolver.resolve("ADS/FUSE#f1")
    assert outcome.status is Outcome.REDIRECT and outcome.target == "http://cxc.example/data/f1"
    assert centers["CXC"][1].requests["/resolve"] == 1


def test_stale_entry_served_during_outage(fed):
    net, clock, _, _, resolver = fed
    resolver.resolve("ADS/HST#hst.07442")
    net.down.add("mast.example")
    clock.advance(7200)
    outcome = resolver.resolve("ADS/HST#hst.07442")
    assert outcome.status is Outcome.REDIRECT and outcome.stale
    resp = call(ResolverApp(resolver), "GET", "/link", {"id": "ADS/HST#hst.07442"})
    assert resp.status == 302 and resp.header(STALE_HEADER) == "true"
    assert resolver.resolve("ADS/HST#fuse-never-seen").status is Outcome.CENTER_UNAVAILABLE


def test_no_stale_serve_when_disabled(fed):
    net, clock, _, _, resolver = fed
    resolver.stale_serve = False
    resolver.resolve("ADS/HST#hst.07442")
    net.down.add("mast.example")
    clock.advance(7200)
    assert resolver.resolve("ADS/HST#hst.07442").status is Outcome.CENTER_UNAVAILABLE


def test_ttl_zero_stores_nothing(fed):
    net, _, centers, _, resolver = fed
    resolver.cache_ttl = 0
    resolver.resolve("ADS/HST#hst.07442")
    resolver.resolve("ADS/HST#hst.07442")
    assert resolve_calls(centers["MAST"][1]) == 2
    assert resolver.cached("ADS/HST#hst.07442") is None
    net.down.add("mast.example")
    assert resolver.resolve("ADS/HST#hst.07442").status is Outcome.CENTER_UNAVAILABLE


def test_no_routing_past_staleness_horizon(fed):
    net, clock, _, registry, resolver = fed
    resolver.resolve("ADS/CHANDRA#obs/1234")
    net.down.add("cxc.example")
    clock.advance(timedelta(days=7).total_seconds())
    registry.refresh()
    assert resolver.resolve("ADS/CHANDRA#obs/1234").status is Outcome.UNKNOWN_FACILITY
    assert resolver.cached("ADS/CHANDRA#obs/1234") is None


def test_http_status_codes(fed):
    *_, resolver = fed
    app = ResolverApp(resolver)
    ok = call(app, "GET", "/link", {"id": "ADS/CHANDRA#obs/1234"})
    assert ok.status == 302 and ok.header("location") == "http://cxc.example/data/1234"
    assert ok.header(STALE_HEADER) is None
    assert call(app, "GET", "/link", {"id": "ADS/CHANDRA"}).status == 400
    assert call(app, "GET", "/link", {"id": "ADS/NOPE#1"}).status == 404
    assert call(app, "GET", "/link", {"id": "ADS/CHANDRA#gone"}).status == 404
    assert call(app, "GET", "/link").status == 400


def test_facility_not_served_reply_is_unavailable(fed):
    _, _, centers, _, resolver = fed
    centers["MAST"][0].hand_off("fuse")
    assert resolver.resolve("ADS/FUSE#f1").status is Outcome.CENTER_UNAVAILABLE


def test_hanging_center_bounded(fed):
    import time

    net, _, _, _, resolver = fed
    net.hanging.add("cxc.example")
    start = time.monotonic()
    assert resolver.resolve("ADS/CHANDRA#obs/1234").status is Outcome.CENTER_UNAVAILABLE
    assert time.monotonic() - start < 0.3 + 0.1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["resolve", "update", "tick"]), st.integers(0, 3)), max_size=30))
def test_cached_answers_are_never_older_than_ttl(ops):
    # After any interleaving, a redirect differs from the center's current
    # URL only if that URL changed less than ttl seconds ago.
    net = InProcessNet()
    clock = SimClock()
    centers, registry = small_federation(net, clock)
    mast = centers["MAST"][0]
    privates = [f"p{n}" for n in range(4)]
    for p in privates:
        mast.insert("hst", p, f"http://mast.example/{p}/0")
    resolver = LinkResolver(registry, client=net, clock=clock, cache_ttl=100)
    changed_at = {p: clock() for p in privates}
    version = dict.fromkeys(privates, 0)
    for op, n in ops:
        p = privates[n]
        if op == "update":
            version[p] += 1
            mast.update_url("hst", p, f"http://mast.example/{p}/{version[p]}")
            changed_at[p] = clock()
        elif op == "tick":
            clock.advance(40)
        else:
            target = resolver.resolve(f"ADS/HST#{p}").target
            if target != mast.current_link("hst", p):
                assert clock() - changed_at[p] < timedelta(seconds=100)
