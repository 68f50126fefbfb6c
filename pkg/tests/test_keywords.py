import pytest
from hypothesis import given, strategies as st

from keyrec.keywords import TaggedToken, extract_keywords, load_pretagged, normalize_keyword

from conftest import write_jsonl


def toks(*pairs):
    return [TaggedToken(s, p) for s, p in pairs]


def test_maximal_runs():
    tokens = toks(("great", "ADJ"), ("pizza", "NOUN"), ("was", "OTHER"), ("served", "VERB"))
    assert extract_keywords(tokens) == ["great pizza", "served"]


def test_no_kept_tags():
    assert extract_keywords(toks(("the", "OTHER"), ("of", "OTHER"))) == []
    assert extract_keywords([]) == []


def test_singleton():
    assert extract_keywords(toks(("pizza", "NOUN"))) == ["pizza"]


def test_output_is_normalized():
    assert extract_keywords([("Live", "ADJ"), ("MUSIC ", "NOUN")]) == ["live music"]


def test_normalize_keyword():
    assert normalize_keyword("  Cheap \t  Eats\n") == "cheap eats"


def test_bad_token():
    with pytest.raises(ValueError):
        TaggedToken("", "NOUN")
    with pytest.raises(ValueError):
        TaggedToken("x", "XYZ")


word = st.text(alphabet="abcdefgh", min_size=1, max_size=5)
token = st.tuples(word, st.sampled_from(["ADJ", "NOUN", "PROPN", "VERB", "OTHER"]))


@given(st.lists(token, max_size=30), st.lists(token, max_size=30))
def test_split_at_other_is_invariant(left, right):
    whole = left + [("and", "OTHER")] + right
    assert extract_keywords(whole) == extract_keywords(left) + extract_keywords(right)


@given(st.lists(token, max_size=30))
def test_keywords_are_contiguous_surfaces(tokens):
    surfaces = [s for s, _ in tokens]
    for kw in extract_keywords(tokens):
        parts = kw.split(" ")
        assert any(surfaces[i:i + len(parts)] == parts for i in range(len(surfaces)))


def test_load_pretagged(tmp_path):
    path = write_jsonl(tmp_path / "t.jsonl", [{
        "user_id": "u1", "item_id": "r1", "review_index": 0,
        "tokens": [{"surface": "cheap", "pos": "ADJ"}, {"surface": "eats", "pos": "NOUN"},
                   {"surface": "and", "pos": "OTHER"}, {"surface": "music", "pos": "NOUN"}],
    }])
    result = load_pretagged(path)
    assert len(result) == 1
    assert result.keywords[("u1", "r1", 0)] == ["cheap eats", "music"]
    assert result.unknown_pos_count == 0


def test_load_pretagged_unknown_pos(tmp_path):
    path = write_jsonl(tmp_path / "t.jsonl", [{
        "user_id": "u1", "item_id": "r1", "review_index": 0,
        "tokens": [{"surface": "cheap", "pos": "ADJ"}, {"surface": "zz", "pos": "XYZ"},
                   {"surface": "eats", "pos": "NOUN"}],
    }])
    result = load_pretagged(path)
    assert result.keywords[("u1", "r1", 0)] == ["cheap", "eats"]
    assert result.unknown_pos_count == 1


def test_load_pretagged_empty(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert len(load_pretagged(path)) == 0
