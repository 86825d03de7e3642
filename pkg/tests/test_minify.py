"""HTML minification passes, goldens, and pipeline properties."""
import json
import re
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from cmlm.minify import (filter_attributes, fold_divs, minify, parse_dom,
                         remove_noise, serialize, strip_non_textual,
                         visible_text)

FIXTURES = Path(__file__).parent / "fixtures"
PAGES = sorted((FIXTURES / "html").glob("*.html"))
FORBIDDEN = re.compile(r"<\s*(header|footer|form|iframe|dialog)\b", re.I)


@pytest.mark.parametrize("page", PAGES, ids=lambda p: p.stem)
def test_golden_minimal_html(page):
    out, _ = minify(page.read_text())
    golden = (FIXTURES / "goldens" / (page.stem + ".min.html")).read_text()
    assert out == golden


@pytest.mark.parametrize("page", PAGES, ids=lambda p: p.stem)
def test_golden_report(page):
    _, report = minify(page.read_text())
    golden = json.loads(
        (FIXTURES / "goldens" / (page.stem + ".report.json")).read_text())
    assert json.loads(report.to_json()) == golden


@pytest.mark.parametrize("page", PAGES, ids=lambda p: p.stem)
def test_pipeline_idempotent_on_fixtures(page):
    out, _ = minify(page.read_text())
    again, _ = minify(out)
    assert again == out


@pytest.mark.parametrize("page", PAGES, ids=lambda p: p.stem)
def test_no_forbidden_tag_survives(page):
    out, _ = minify(page.read_text())
    assert not FORBIDDEN.search(out)


@pytest.mark.parametrize("page", PAGES, ids=lambda p: p.stem)
def test_output_never_longer_than_input(page):
    html = page.read_text()
    out, _ = minify(html)
    assert len(out.encode()) <= len(html.encode())


@pytest.mark.parametrize("page", PAGES, ids=lambda p: p.stem)
def test_report_accounting_invariant(page):
    _, report = minify(page.read_text())
    assert (report.elements_in - report.elements_out
            == sum(report.removed.values()) + report.folded_divs)


@pytest.mark.parametrize("page", PAGES, ids=lambda p: p.stem)
def test_attributes_alphabetical_everywhere(page):
    out, _ = minify(page.read_text())
    for tag in re.finditer(r"<([a-z][a-z0-9]*)((?:\s+[^<>]*?)?)>", out):
        names = re.findall(r'\s([a-z:-]+)(?:="[^"]*")?', tag.group(2))
        assert names == sorted(names)


def test_fold_merges_attributes_with_outer_priority():
    out, _ = minify('<div id="a"><div class="b"><p>x</p></div></div>')
    assert out == '<div class="b" id="a"><p>x</p></div>'


def test_fold_class_union_preserves_order():
    out, _ = minify('<div class="x y"><div class="y z"><p>t</p></div></div>')
    assert out == '<div class="x y z"><p>t</p></div>'


def test_fold_outer_value_wins_on_conflict():
    out, _ = minify('<div id="outer"><div id="inner"><p>t</p></div></div>')
    assert out == '<div id="outer"><p>t</p></div>'


def test_fold_skips_div_with_non_div_sibling():
    html = "<div><p>x</p><div><p>y</p></div></div>"
    out, _ = minify(html)
    assert out == html


def test_triple_nested_divs_collapse_to_one():
    out, report = minify("<div><div><div><p>x</p></div></div></div>")
    assert out == "<div><p>x</p></div>"
    assert report.folded_divs == 2


def test_empty_input():
    out, report = minify("")
    assert out == ""
    assert report.elements_in == report.elements_out == 0
    assert report.removed == {}


def test_noise_class_token_match_not_substring():
    kept, _ = minify('<p class="preformatted">stay</p>')
    assert "preformatted" in kept
    gone, report = minify('<div class="site-copyright">x</div><p>y</p>')
    assert "copyright" not in gone
    assert report.removed.get("class_or_id") == 1


def test_noise_id_match_case_insensitive():
    out, _ = minify('<div id="Page-Footer">x</div><p>y</p>')
    assert out == "<p>y</p>"


def test_strip_keeps_img_without_text():
    out, _ = minify('<div><img src="u"></div>')
    assert out == '<div><img src="u"></div>'


def test_strip_drops_empty_span_but_keeps_textual_sibling():
    out, _ = minify("<div><span></span><p>x</p></div>")
    assert out == "<div><p>x</p></div>"


def test_whitespace_only_text_is_not_textual():
    out, _ = minify("<div><span>   \n\t </span></div><p>y</p>")
    assert out == "<p>y</p>"


def test_meta_property_content_survives_attribute_pass():
    dom = parse_dom('<meta content="T" property="og:title">')
    filtered = filter_attributes(dom)
    assert serialize(filtered) == '<meta content="T" property="og:title">'


def test_property_attribute_dropped_off_meta():
    dom = parse_dom('<p content="T" property="og:title">x</p>')
    assert serialize(filter_attributes(dom)) == "<p>x</p>"


def test_functional_attributes_survive():
    out, _ = minify('<a href="/u" hreflang="en" title="t">go</a>')
    assert out == '<a href="/u" title="t">go</a>'


def test_microdata_attributes_survive():
    html = '<p itemprop="name" itemscope itemtype="s">x</p>'
    out, _ = minify(html)
    assert out == html


def test_visible_text_skips_script_and_style():
    dom = parse_dom("<div><script>code()</script><style>.a{}</style>"
                    "<noscript>n</noscript><p>real</p></div>")
    assert visible_text(dom).strip() == "real"


def test_each_pass_idempotent_on_fixture_output():
    for page in PAGES:
        dom = parse_dom(page.read_text())
        for step in (remove_noise, strip_non_textual, fold_divs,
                     filter_attributes):
            dom = step(dom)
            once = serialize(dom)
            assert serialize(step(parse_dom(once))) == once


simple_html = st.recursive(
    st.text(alphabet="abc <>&\"'/=", max_size=12),
    lambda inner: st.builds(
        lambda tag, body: f"<{tag}>{body}</{tag}>",
        st.sampled_from(["div", "p", "span", "b", "form", "header"]),
        inner),
    max_leaves=6)


@settings(max_examples=400, deadline=None)
@given(simple_html)
def test_minify_never_crashes_and_is_idempotent(html):
    out, report = minify(html)
    again, _ = minify(out)
    assert again == out
    assert (report.elements_in - report.elements_out
            == sum(report.removed.values()) + report.folded_divs)
