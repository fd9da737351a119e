import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from globnorm.features import (PAD, ROOT_ID, UNK, FeatureExtractor, TemplateError, Vocabulary,
                               char_ngrams, default_template, fit_vocabularies, load_template,
                               parse_template)
from globnorm.systems import ArcStandardSystem, TaggingSystem, make_system
from globnorm.corpus import projective_trees
from globnorm.transitions import Sentence

from conftest import TAGS5


def extractor(text, sents, system):
    return FeatureExtractor(fit_vocabularies(parse_template(text), sents, system), system)


def test_vocabulary_reserves_special_ids():
    v = Vocabulary(["b", "a"])
    assert v.items[:3] == ("<PAD>", "<UNK>", "<ROOT>")
    assert v.id("a") == 3 and v.id("zzz") == UNK
    assert Vocabulary.from_items(v.items) == v
    with pytest.raises(TemplateError):
        Vocabulary.from_items(["a", "b"])


def test_template_parsing():
    t = parse_template("""
        # comment line
        words input:form -2..2 16
        ctx   input:tag  s0,b0,s0.l1.l1 8 - 1
        hist  history    1..3 4
    """)
    words, ctx, hist = t.groups
    assert words.locations == (-2, -1, 0, 1, 2) and words.dim == 16 and words.lookahead is None
    assert ctx.locations == ("s0", "b0", "s0.l1.l1") and ctx.lookahead == 1
    assert hist.locations == (1, 2, 3)
    assert t.input_width == 5 * 16 + 3 * 8 + 3 * 4
    assert t.required_columns() == {"tag"}
    again = parse_template(t.to_text())
    assert [(g.name, g.source, g.locations, g.dim, g.lookahead) for g in again.groups] == \
           [(g.name, g.source, g.locations, g.dim, g.lookahead) for g in t.groups]


@pytest.mark.parametrize("text", [
    "w input:form -1..1",            # too few fields
    "w bogus -1..1 4",               # unknown source
    "w input -1..1 4",               # missing column
    "w input:form x9 4",             # bad location
    "h history 0..2 4",              # history must be positive
    "w input:form 0 0",              # zero dim
    "w input:form 0 4 - -1",         # negative lookahead
    "w input:form 0 4\nw input:form 1 4",  # duplicate name
    "",                              # empty
])
def test_template_errors(text):
    with pytest.raises(TemplateError):
        parse_template(text)


def test_vocab_file_and_load_template(tmp_path):
    (tmp_path / "words.txt").write_text("dog\ncat\n", encoding="utf-8")
    (tmp_path / "t.tpl").write_text("w input:form 0 4 words.txt\n", encoding="utf-8")
    t = load_template(tmp_path / "t.tpl")
    assert t.groups[0].vocab.items[3:] == ("cat", "dog")


def test_window_padding_at_sentence_start():
    x = Sentence.from_words(["a", "b"])
    tag = TaggingSystem(TAGS5)
    ex = extractor("w input:form -3..3 4", [x], tag)
    ids, w = ex.extract(tag.start_state(x), x)["w"]
    ids = ids[:, 0]
    assert list(ids[[0, 1, 2, 5, 6]]) == [PAD] * 5
    assert ids[3] == ex.template.groups[0].vocab.id("a")
    assert ids[4] == ex.template.groups[0].vocab.id("b")


def test_history_shorter_than_window():
    x = Sentence.from_words(["a", "b", "c"])
    tag = TaggingSystem(TAGS5)
    ex = extractor("h history 1..4 4", [x], tag)
    state = tag.replay(x, [tag.decision_id("TAG:A")])[-1]
    ids = ex.extract(state, x)["h"][0][:, 0]
    vocab = ex.template.groups[0].vocab
    assert list(ids) == [vocab.id("TAG:A"), PAD, PAD, PAD]


def test_char_ngrams_of_short_word():
    grams = char_ngrams("ab", 3)
    assert set(grams) == {"a", "b", "ab", "^a", "^ab", "b$", "ab$"}
    assert set(char_ngrams("ab", 3, boundary=False)) == {"a", "b", "ab"}


def test_char_group_is_a_weighted_bag():
    x = Sentence.from_words(["ab"])
    tag = TaggingSystem(TAGS5)
    ex = extractor("c chars:3 0 4", [x], tag)
    ids, w = ex.extract(tag.start_state(x), x)["c"]
    assert ids.shape == (1, 32)
    assert np.count_nonzero(ids) == 7
    assert w.sum() == pytest.approx(1.0)


def test_unknown_word_maps_to_unk():
    tag = TaggingSystem(TAGS5)
    ex = extractor("w input:form 0 4", [Sentence.from_words(["a"])], tag)
    y = Sentence.from_words(["never-seen"])
    assert ex.extract(tag.start_state(y), y)["w"][0][0, 0] == UNK


def test_parse_locators_and_root():
    X, Y = projective_trees(1, seed=3, min_len=4, max_len=4)
    x, y = X[0], Y[0]
    parse = make_system("parsing", Y)
    ex = extractor("w input:form s0,s1,b0 4\nl label s0.l1,s0.r1 4", X, parse)
    start = parse.start_state(x)
    ids = ex.extract(start, x)["w"][0][:, 0]
    vocab = ex.template.groups[0].vocab
    assert list(ids) == [ROOT_ID, PAD, vocab.id(x.forms[0])]
    # after a full gold run every dependent label is visible from its head
    states = parse.replay(x, parse.unroll_gold(x, y))
    for s in states:
        for name, (ids, w) in ex.extract(s, x).items():
            assert ids.shape[0] == ex.template.groups[[g.name for g in ex.template.groups].index(name)].arity


def test_missing_column_and_wrong_system():
    parse = ArcStandardSystem(["l"])
    x = Sentence.from_words(["a"], tag=["N"])
    ex = extractor("t input:tag s0 4", [x], parse)
    with pytest.raises(TemplateError):
        ex.check_sentence(Sentence.from_words(["a"]))
    tag = TaggingSystem(TAGS5)
    with pytest.raises(TemplateError):
        extractor("l label s0.l1 4", [x], tag)


def test_default_templates_parse():
    assert default_template("tagging").input_width == 7 * 16 + 7 * 8 + 4 * 8
    assert len(default_template("parsing").groups[0].locations) == 18
    assert len(default_template("parsing").groups[2].locations) == 12
    assert default_template("compression").groups[1].kind == "history"


@settings(max_examples=50, deadline=None)
@given(k=st.integers(0, 2), m=st.integers(2, 7), i=st.integers(0, 6), seed=st.integers(0, 10**6))
def test_lookahead_hides_the_future(k, m, i, seed):
    """Features at position i are unchanged when any word after i + k changes."""
    i = min(i, m - 1)
    rng = np.random.default_rng(seed)
    words = [f"w{v}" for v in rng.integers(0, 5, size=m)]
    other = list(words)
    for j in range(i + k + 1, m):
        other[j] = f"w{(int(words[j][1:]) + 1) % 5}"
    x, x2 = Sentence.from_words(words), Sentence.from_words(other)
    tag = TaggingSystem(TAGS5)
    text = f"w input:form -3..3 4 - {k}\nc chars:2 -2..2 4 - {k}\nh history 1..2 4"
    ex = extractor(text, [x, x2], tag)
    hist = [int(d) for d in rng.integers(0, 5, size=i)]
    s1, s2 = tag.replay(x, hist)[-1], tag.replay(x2, hist)[-1]
    f1, f2 = ex.extract(s1, x), ex.extract(s2, x2)
    for name in f1:
        assert np.array_equal(f1[name][0], f2[name][0])
        assert np.array_equal(f1[name][1], f2[name][1])
