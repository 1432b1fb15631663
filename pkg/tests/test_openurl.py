import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsidlink.openurl import (
    OpenUrlSettings,
    PrefError,
    PrefErrorKind,
    build_pref_link,
    parse_pref_link,
    resolve_icon,
)

BASE = "http://adsabs.harvard.edu/cgi-bin/pref_set?4"


def test_relative_icon_is_resolved_against_server():
    s = parse_pref_link(BASE + "&OpenURL=http://lib.example/open&Icon=btn.gif")
    assert s == OpenUrlSettings("http://lib.example/open", "http://lib.example/open/btn.gif")


def test_full_icon_url_is_kept():
    s = parse_pref_link(BASE + "&OpenURL=http://lib.example/open&Icon=http://cdn.example/btn.gif")
    assert s.icon_url == "http://cdn.example/btn.gif"


def test_parameter_names_are_case_sensitive():
    with pytest.raises(PrefError) as err:
        parse_pref_link(BASE + "&openurl=http://lib.example/open")
    assert err.value.kind is PrefErrorKind.MISSING_OPENURL
    s = parse_pref_link(BASE + "&OpenURL=http://lib.example/open&icon=ignored.gif")
    assert s.icon_url is None


@pytest.mark.parametrize("link, kind", [
    (BASE, PrefErrorKind.MISSING_OPENURL),
    (BASE + "&OpenURL=", PrefErrorKind.MISSING_OPENURL),
    (BASE + "&OpenURL=lib.example/open", PrefErrorKind.BAD_SERVER_URL),
    (BASE + "&OpenURL=ftp://lib.example/", PrefErrorKind.BAD_SERVER_URL),
    (BASE + "&OpenURL=http://lib.example/&Icon=ftp://x/b.gif", PrefErrorKind.BAD_ICON_RESOLUTION),
    (BASE + "&OpenURL=http://lib.example/&Icon=javascript:alert(1)", PrefErrorKind.BAD_ICON_RESOLUTION),
])
def test_errors(link, kind):
    with pytest.raises(PrefError) as err:
        parse_pref_link(link)
    assert err.value.kind is kind


def test_wrapped_link_as_printed():
    s = parse_pref_link("http://adsabs.harvard.edu/cgi-bin/pref_set?4&\n   OpenURL=http://lib.example/open&\n Icon=btn.gif")
    assert s.icon_url == "http://lib.example/open/btn.gif"


@pytest.mark.parametrize("server, icon, expected", [
    ("http://lib.example/open/", "btn.gif", "http://lib.example/open/btn.gif"),
    ("http://lib.example", "btn.gif", "http://lib.example/btn.gif"),
    ("http://lib.example/open?sid=ads", "img/btn.gif", "http://lib.example/open/img/btn.gif"),
    ("http://lib.example/open", "/icons/b.gif", "http://lib.example/icons/b.gif"),
])
def test_prepend_join(server, icon, expected):
    assert resolve_icon(server, icon) == expected


def test_build_omits_absent_icon():
    link = build_pref_link(OpenUrlSettings("http://lib.example/open"))
    assert link == "http://adsabs.harvard.edu/cgi-bin/pref_set?4&OpenURL=http%3A%2F%2Flib.example%2Fopen"
    assert "Icon" not in link


def test_server_with_ampersand_survives():
    s = OpenUrlSettings("http://lib.example/resolve?sid=ads&genre=article", "http://lib.example/b.gif")
    link = build_pref_link(s)
    assert "&genre" not in link
    assert parse_pref_link(link) == s


host = st.from_regex(r"[a-z][a-z0-9-]{0,12}(\.[a-z]{2,6}){1,2}", fullmatch=True)
segment = st.text(alphabet="abcXYZ019-._~!$'()*+,;=:@%&?/ ", max_size=10)
absolute = st.builds(
    lambda scheme, h, port, path, query: f"{scheme}://{h}{port}/{path}" + (f"?{query}" if query else ""),
    st.sampled_from(["http", "https"]),
    host,
    st.sampled_from(["", ":8080"]),
    segment.map(lambda s: s.replace(" ", "").replace("?", "").replace("%", "")),
    segment.map(lambda s: s.replace(" ", "")),
)
settings_st = st.builds(OpenUrlSettings, absolute, st.none() | absolute)


@settings(max_examples=300)
@given(settings_st)
def test_round_trip(s):
    assert parse_pref_link(build_pref_link(s)) == s


@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyzOPENURLIC", min_size=1, max_size=8))
def test_only_exact_keys_recognized(name):
    link = f"{BASE}&{name}=http://lib.example/open"
    if name == "OpenURL":
        assert parse_pref_link(link).server_url == "http://lib.example/open"
    else:
        with pytest.raises(PrefError):
            parse_pref_link(link)
