import pytest
from hypothesis import given
from hypothesis import strategies as st

from divkey.errors import EmptyDocument
from divkey.text import (
    TokenizedDocument,
    build_nodes,
    detokenize,
    find_phrase,
    match_phrase,
    stem,
    tokenize,
    unique_phrases,
)

words = st.sampled_from(["traffic", "noise", "noises", "model", "city", "graph", "relational", "a", "x1", "2024"])


def test_tokenize_splits_punctuation_and_lowercases():
    assert tokenize("Traffic noise. NOISE!").tokens == ("traffic", "noise", "noise")
    assert tokenize("GCN-based").tokens == ("gcn", "based")


def test_tokenize_keeps_digits_and_drops_underscores():
    assert tokenize("top_10 in 2024").tokens == ("top", "10", "in", "2024")


@pytest.mark.parametrize("raw", ["", "   ", "--!?", "___"])
def test_tokenize_empty_raises(raw):
    with pytest.raises(EmptyDocument):
        tokenize(raw)


def test_tokenize_truncates_tail():
    doc = tokenize("a b c d e", max_length=3)
    assert doc.tokens == ("a", "b", "c")
    assert doc.length == 3


# Expected stems worked out by hand from Porter's 1980 rule tables.
@pytest.mark.parametrize(
    "word, expected",
    [
        ("noises", "nois"),
        ("noise", "nois"),
        ("relational", "relat"),
        ("a", "a"),
        ("is", "is"),
        ("caresses", "caress"),
        ("ponies", "poni"),
        ("hopping", "hop"),
        ("generalizations", "gener"),
        ("networks", "network"),
    ],
)
def test_porter_stems(word, expected):
    assert stem(word) == expected


def test_build_nodes_examples():
    t = build_nodes(TokenizedDocument(("a", "b", "a"), ("a", "b", "a")))
    assert t.nodes == ("a", "b")
    assert t.positions == ((0, 2), (1,))
    t = build_nodes(TokenizedDocument(("x",), ("x",)))
    assert t.nodes == ("x",) and t.positions == ((0,),)
    t = build_nodes(TokenizedDocument(("a",) * 3, ("a",) * 3))
    assert t.node_count == 1 and t.positions == ((0, 1, 2),)


def test_surface_is_most_frequent_form():
    t = build_nodes(tokenize("noises noise noises"))
    assert t.nodes == ("nois",) and t.surfaces == ("noises",)
    t = build_nodes(tokenize("noise noises"))
    assert t.surfaces == ("noise",)  # tie: first seen


def test_match_phrase_examples():
    assert match_phrase(["traffic", "noises"], ["traffic", "noise"])
    assert not match_phrase(["noise", "traffic"], ["traffic", "noise"])
    assert not match_phrase(["traffic"], ["traffic", "noise"])


def test_find_phrase():
    stems = ("a", "b", "c", "b", "c")
    assert find_phrase(stems, ("b", "c")) == 1
    assert find_phrase(stems, ("c", "a")) == -1
    assert find_phrase(stems, ()) == -1


def test_unique_phrases_dedupes_by_stem():
    assert unique_phrases(["traffic noise", "Traffic noises", "", "city"]) == [("traffic", "noise"), ("city",)]


@given(st.lists(words, min_size=1, max_size=40))
def test_positions_partition_the_document(tokens):
    doc = tokenize(" ".join(tokens))
    table = build_nodes(doc)
    flat = sorted(p for ps in table.positions for p in ps)
    assert flat == list(range(doc.length))
    # first-occurrence order
    firsts = [ps[0] for ps in table.positions]
    assert firsts == sorted(firsts)


@given(st.lists(words, min_size=1, max_size=40))
def test_build_nodes_idempotent_under_retokenization(tokens):
    doc = tokenize(" ".join(tokens))
    again = tokenize(detokenize(doc))
    assert again == doc
    assert build_nodes(again) == build_nodes(doc)


@given(st.lists(words, min_size=1, max_size=3), st.lists(words, min_size=1, max_size=3), st.lists(words, min_size=1, max_size=3))
def test_match_phrase_is_an_equivalence(a, b, c):
    assert match_phrase(a, a)
    assert match_phrase(a, b) == match_phrase(b, a)
    if match_phrase(a, b) and match_phrase(b, c):
        assert match_phrase(a, c)


def test_tokenize_is_deterministic():
    raw = "Graph-based keyphrase extraction, 2nd edition."
    assert tokenize(raw) == tokenize(raw)
