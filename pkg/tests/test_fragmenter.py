import pytest

from features.fragmenter import Clue, ClueFileError, extract_fragments, load_clues, opening_tag
from tests.conftest import read_page

F1 = '<span id="ctl00" class="price">$ 125</span>'
F2 = '<div class="saving">SAVE10%=&euro;12.80</div>'


def test_worked_example_page_has_149_fragments(clues):
    fragments = extract_fragments(read_page("zingerman.html"), clues)
    assert len(fragments) == 149
    htmls = [f.html for f in fragments]
    assert F1 in htmls
    assert F2 in htmls


def test_fragments_point_back_into_the_body(clues):
    page = read_page("zingerman.html")
    for fragment in extract_fragments(page, clues):
        assert page.body[fragment.start_offset:fragment.end_offset] == fragment.html
        assert fragment.weight == 0
        assert len(fragment.context) <= 30


def test_no_clue_no_fragment(clues):
    assert extract_fragments(read_page("zero_candidate.html"), clues) == []
    assert extract_fragments("<p>$5</p>", []) == []


def test_entity_spellings_match_the_symbol_clue():
    fragments = extract_fragments('<div><span class="p">&#36;19.99</span></div>', [Clue("$", "USD")])
    assert [f.html for f in fragments] == ['<span class="p">&#36;19.99</span>']
    assert fragments[0].clue == Clue("$", "USD")


def test_literal_clue_claims_its_position_first():
    fragments = extract_fragments("<p>&euro;5</p>", [Clue("€", "EUR"), Clue("&euro;", "EUR")])
    assert len(fragments) == 1
    assert fragments[0].clue.text == "&euro;"


def test_digitless_element_widens_to_its_parent(clues):
    fragments = extract_fragments(read_page("split_price.html"), clues)
    assert len(fragments) == 1
    assert fragments[0].html.startswith('<span class="current sale">1.104')
    assert fragments[0].html.endswith("</span></span>")
    assert extract_fragments(read_page("split_price.html"), clues, widen=False)[0].html == \
        '<span class="currency">&euro;</span>'


def test_oversized_element_falls_back_to_a_window_around_the_clue():
    body = "<div>" + "x" * 3000 + "$42" + "y" * 3000 + "</div>"
    fragment = extract_fragments(body, [Clue("$", "USD")], cap=1000)[0]
    assert len(fragment.html) == 1000
    assert "$42" in fragment.html


def test_script_and_style_text_is_ignored(clues):
    body = "<html><script>var p = '$99';</script><style>.a:after{content:'$'}</style><b>$5</b></html>"
    assert [f.html for f in extract_fragments(body, clues)] == ["<b>$5</b>"]


def test_broken_markup_is_tolerated(clues):
    fragments = extract_fragments("<div><p>$ 12</div></span><p>£3", clues)
    assert [f.clue.currency_code for f in fragments] == ["USD", "GBP"]


def test_opening_tag(clues):
    assert opening_tag(extract_fragments(F1, clues)[0]) == ("span", 'id="ctl00" class="price"')


def test_load_clues(tmp_path):
    path = tmp_path / "clues.txt"
    path.write_text("# currencies\n$,USD\n&euro;,EUR\n$,USD\n\nkr,SEK\n", encoding="utf-8")
    assert load_clues(path) == [Clue("$", "USD"), Clue("&euro;", "EUR"), Clue("kr", "SEK")]


@pytest.mark.parametrize("line", ["$", "$,usd", ",USD", "$,DOLLARS"])
def test_bad_clue_lines_name_the_line(tmp_path, line):
    path = tmp_path / "clues.txt"
    path.write_text(f"€,EUR\n{line}\n", encoding="utf-8")
    with pytest.raises(ClueFileError, match="line 2"):
        load_clues(path)


def test_bundled_clue_file(clues):
    assert [(c.text, c.currency_code) for c in clues] == [
        ("$", "USD"), ("€", "EUR"), ("&euro;", "EUR"), ("£", "GBP"),
        ("USD", "USD"), ("EUR", "EUR"), ("GBP", "GBP"),
    ]


def test_quoted_angle_bracket_does_not_block_widening(clues):
    body = '<p class="price"><span class="cur" data-tip="1>2">$</span> 40</p>'
    fragments = extract_fragments(body, clues)
    assert [f.html for f in fragments] == [body]


def test_fragment_remembers_its_clue_occurrence():
    body = '<div class="prices"><span class="c">$</span>5 <span class="c">$</span>7</div>'
    fragments = extract_fragments(body, [Clue("$", "USD")])
    assert [f.html for f in fragments] == [body, body]
    assert [body[f.clue_offset:f.clue_offset + f.clue_length] for f in fragments] == ["$", "$"]
    assert fragments[0].clue_offset < fragments[1].clue_offset
