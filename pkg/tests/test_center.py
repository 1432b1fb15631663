import random
from datetime import datetime, timezone

import pytest

from dsidlink.center import (
    CenterApp,
    DataCenter,
    DuplicateRecord,
    FacilityNotServed,
    InventoryFormatError,
    RecordNotFound,
    VerdictStatus,
    read_inventory,
)
from dsidlink.clock import SimClock
from dsidlink.registry import PROFILE_PATH, parse_profile
from tests.helpers import call


@pytest.fixture
def mast(tmp_path):
    center = DataCenter(
        "MAST", "Multimission Archive at STScI", base_url="http://mast.example", facilities=["hst", "fuse"],
        inventory_path=tmp_path / "mast.tsv", clock=SimClock(),
    )
    center.insert("hst", "hst.07442", "http://mast.example/a")
    return center


def test_verify_local_known_and_unknown(mast):
    verdict = mast.verify_local("hst", "hst.07442")
    assert verdict.status is VerdictStatus.VALID and verdict.current_url == "http://mast.example/a"
    assert mast.verify_local("hst", "hst.99999").status is VerdictStatus.NOT_FOUND


def test_private_ids_are_case_sensitive(mast):
    assert mast.verify_local("hst", "HST.07442").status is VerdictStatus.NOT_FOUND


def test_unserved_facility(mast):
    with pytest.raises(FacilityNotServed):
        mast.verify_local("chandra", "x")


def test_current_link_follows_update(mast):
    mast.update_url("hst", "hst.07442", "http://mast.example/b")
    assert mast.current_link("hst", "hst.07442") == "http://mast.example/b"
    with pytest.raises(RecordNotFound):
        mast.current_link("hst", "missing")
    with pytest.raises(RecordNotFound):
        mast.update_url("hst", "missing", "http://x/")


def test_duplicate_insert_is_rejected(mast):
    with pytest.raises(DuplicateRecord):
        mast.insert("HST", "hst.07442", "http://elsewhere/")
    assert mast.current_link("hst", "hst.07442") == "http://mast.example/a"


@pytest.mark.parametrize("facility, private, url", [
    ("h st", "x", "http://a/"), ("hst", "a#b", "http://a/"), ("hst", "x", "ftp://a/"), ("hst", "x", "a/b"),
])
def test_insert_validates(mast, facility, private, url):
    with pytest.raises(ValueError):
        mast.insert(facility, private, url)


def test_random_lookups_match_seed_map(tmp_path):
    rng = random.Random(7)
    center = DataCenter("MAST", facilities=["hst", "fuse"], inventory_path=tmp_path / "i.tsv", clock=SimClock())
    seeded = {}
    for n in range(200):
        key = (rng.choice(["hst", "fuse"]), f"obs{n:04d}")
        seeded[key] = f"http://mast.example/{n}"
        center.insert(*key, seeded[key])
    for n in range(50):
        facility = rng.choice(["hst", "fuse"])
        private = f"obs{rng.randrange(400):04d}"
        verdict = center.verify_local(facility, private)
        if (facility, private) in seeded:
            assert verdict.current_url == seeded[(facility, private)]
        else:
            assert verdict.status is VerdictStatus.NOT_FOUND


def test_export_is_sorted_and_round_trips(mast, tmp_path):
    for p in ["z9", "a1", "m5"]:
        mast.insert("hst", p, f"http://mast.example/{p}")
    exported = mast.export_inventory("hst")
    assert [r.private_id for r in exported] == sorted(r.private_id for r in exported)
    other = DataCenter("CXC", facilities=["chandra"], inventory_path=tmp_path / "cxc.tsv")
    other.import_records(exported)
    assert other.export_inventory("hst") == exported


def test_import_refuses_clashes(mast):
    records = mast.export_inventory("hst")
    with pytest.raises(DuplicateRecord):
        mast.import_records(records)


def test_hand_off_moves_everything(mast, tmp_path):
    mast.insert("hst", "b", "http://mast.example/b")
    moved = mast.hand_off("hst")
    assert len(moved) == 2
    assert "hst" not in mast.facilities
    with pytest.raises(FacilityNotServed):
        mast.verify_local("hst", "b")
    reloaded = DataCenter("MAST", facilities=["fuse"], inventory_path=tmp_path / "mast.tsv")
    assert reloaded.all_records() == []


def test_profile_round_trips(mast):
    profile = parse_profile(mast.serve_profile())
    assert profile.center_id == "MAST"
    assert profile.facilities == {"hst", "fuse"}
    assert profile.verifier_url == "http://mast.example/verify"
    assert profile.resolver_url == "http://mast.example/resolve"


def test_inventory_file_format_and_persistence(tmp_path):
    clock = SimClock(datetime(2006, 9, 1, 12, 0, tzinfo=timezone.utc))
    path = tmp_path / "inv.tsv"
    center = DataCenter("MAST", facilities=["hst"], inventory_path=path, clock=clock)
    center.insert("hst", "obs/1", "http://a.example/1")
    clock.advance(60)
    center.update_url("hst", "obs/1", "http://a.example/2")
    assert path.read_text() == (
        "hst\tobs/1\thttp://a.example/1\t2006-09-01T12:00:00Z\n"
        "hst\tobs/1\thttp://a.example/2\t2006-09-01T12:00:00Z\n"
    )
    reloaded = DataCenter("MAST", facilities=["hst"], inventory_path=path)
    assert reloaded.current_link("hst", "obs/1") == "http://a.example/2"
    reloaded.compact()
    assert path.read_text().count("\n") == 1


@pytest.mark.parametrize("line", ["hst\tx\thttp://a/", "h st\tx\thttp://a/\t2006-09-01T00:00:00Z",
                                  "hst\tx\tnope\t2006-09-01T00:00:00Z", "hst\tx\thttp://a/\tyesterday"])
def test_corrupt_inventory_lines(tmp_path, line):
    path = tmp_path / "bad.tsv"
    path.write_text(line + "\n")
    with pytest.raises(InventoryFormatError):
        read_inventory(path)


def test_http_verify(mast):
    app = CenterApp(mast)
    resp = call(app, "GET", "/verify", {"facility": "HST", "private": "hst.07442"})
    assert resp.status == 200
    assert resp.body == b'<verdict status="valid" url="http://mast.example/a" />\n'
    resp = call(app, "GET", "/verify", {"facility": "hst", "private": "nope"})
    assert resp.body == b'<verdict status="notfound" />\n'
    resp = call(app, "GET", "/verify", {"facility": "iras", "private": "x"})
    assert resp.status == 404 and resp.header("x-dsid-error") == "facility-not-served"
    assert call(app, "GET", "/verify", {"facility": "hst"}).status == 400
    assert app.requests["/verify"] == 4


def test_http_resolve(mast):
    app = CenterApp(mast)
    resp = call(app, "GET", "/resolve", {"facility": "hst", "private": "hst.07442"})
    assert resp.status == 302 and resp.header("location") == "http://mast.example/a"
    resp = call(app, "GET", "/resolve", {"facility": "hst", "private": "gone"})
    assert resp.status == 404 and resp.header("x-dsid-error") == "not-found"


def test_http_profile_etag(mast):
    app = CenterApp(mast)
    first = call(app, "GET", PROFILE_PATH)
    assert first.status == 200 and parse_profile(first.body).center_id == "MAST"
    again = call(app, "GET", PROFILE_PATH, headers={"If-None-Match": first.header("etag")})
    assert again.status == 304 and again.body == b""
    mast.serve_facility("iue")
    changed = call(app, "GET", PROFILE_PATH, headers={"If-None-Match": first.header("etag")})
    assert changed.status == 200 and "iue" in parse_profile(changed.body).facilities


def test_wrong_method_and_path(mast):
    app = CenterApp(mast)
    assert call(app, "POST", "/verify").status == 405
    assert call(app, "GET", "/nothing").status == 404
