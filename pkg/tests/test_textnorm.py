import pytest
from hypothesis import given, settings, strategies as st

from pausekit.textnorm import (
    EmptySentenceError, Token, Vocabulary, detokenize, normalize_sentence,
    tokenize_sentence, wordpiece_tokenize,
)


def texts(units):
    return [u.text for u in units]


class TestNormalize:
    def test_collapses_punctuation_run(self):
        assert texts(normalize_sentence("Hello!! world")) == ["hello", "!", "world"]

    def test_identity(self):
        assert texts(normalize_sentence("abc")) == ["abc"]

    def test_quotes_and_mixed_run(self):
        assert texts(normalize_sentence('He said, "No?!"')) == ["he", "said", ",", "no", "?"]

    def test_hyphen_and_contraction_stay_in_word(self):
        assert texts(normalize_sentence("A well-known man didn't go.")) == ["a", "well-known", "man", "didn't", "go", "."]

    def test_punct_flags(self):
        units = normalize_sentence("Yes, sir.")
        assert [u.is_punct for u in units] == [False, True, False, True]

    @pytest.mark.parametrize("raw", ["", "   ", "\t\n"])
    def test_empty(self, raw):
        with pytest.raises(EmptySentenceError):
            normalize_sentence(raw)


class TestWordpiece:
    def test_greedy_split(self, vocab):
        toks = wordpiece_tokenize("waiting", vocab)
        assert [t.canonical for t in toks] == ["wait", "##ing"]
        assert [t.is_word_final for t in toks] == [False, True]
        assert [t.is_continuation for t in toks] == [False, True]

    def test_whole_word(self, vocab):
        toks = wordpiece_tokenize("cat", vocab)
        assert toks == [Token("cat", word_index=0, is_word_final=True)]

    def test_unk_fallback(self, vocab):
        toks = wordpiece_tokenize("qzx", vocab)
        assert [t.text for t in toks] == ["[UNK]"] and toks[0].is_word_final

    def test_partial_match_becomes_single_unk(self, vocab):
        # "waitx": "wait" matches but "##x" does not
        assert [t.text for t in wordpiece_tokenize("waitx", vocab)] == ["[UNK]"]

    def test_max_word_chars(self):
        v = Vocabulary(["a", "##a"], max_word_chars=5)
        assert len(wordpiece_tokenize("aaaaa", v)) == 5
        assert [t.text for t in wordpiece_tokenize("aaaaaa", v)] == ["[UNK]"]

    def test_longest_match_preferred(self):
        v = Vocabulary(["un", "unbeliev", "##believ", "##able", "##a", "##ble"])
        assert [t.canonical for t in wordpiece_tokenize("unbelievable", v)] == ["unbeliev", "##able"]


class TestTokenizeSentence:
    def test_composition(self, vocab):
        toks = tokenize_sentence('He said, "No?!" Waiting quietly.', vocab)
        assert [t.canonical for t in toks] == ["he", "said", ",", "no", "?", "wait", "##ing", "quiet", "##ly", "."]
        assert [t.word_index for t in toks] == [0, 1, 2, 3, 4, 5, 5, 6, 6, 7]
        assert [t.is_punct for t in toks] == [False, False, True, False, True, False, False, False, False, True]

    def test_empty(self, vocab):
        with pytest.raises(EmptySentenceError):
            tokenize_sentence("", vocab)

    def test_single_word(self, vocab):
        toks = tokenize_sentence("Cat", vocab)
        assert len(toks) == 1 and toks[0].is_word_final


def test_vocab_file_round_trip(tmp_path, vocab):
    p = tmp_path / "vocab.txt"
    vocab.save(p)
    assert Vocabulary.load(p) == vocab


def test_vocab_adds_unk_and_rejects_duplicates():
    v = Vocabulary(["a", "b"])
    assert v.entries[0] == "[UNK]" and v.index("zzz") == 0
    with pytest.raises(ValueError):
        Vocabulary(["a", "a"])


words = st.text(alphabet="abcdefghij-", min_size=1, max_size=12).filter(lambda w: w.strip("-"))
puncts = st.sampled_from(list(".,;:!?()"))
sentences = st.lists(st.one_of(words, puncts), min_size=1, max_size=12).map(" ".join)


@settings(max_examples=200, deadline=None)
@given(sentences)
def test_round_trip_with_character_vocab(char_vocab, raw):
    try:
        units = normalize_sentence(raw)
    except EmptySentenceError:
        return
    toks = tokenize_sentence(raw, char_vocab)
    assert detokenize(toks) == [u.text for u in units]
    n_words = sum(not u.is_punct for u in units)
    assert sum(t.is_word_final and not t.is_punct for t in toks) == n_words
    assert tokenize_sentence(raw, char_vocab) == toks
    # tokens of a unit are contiguous with exactly one word-final token, the last
    by_unit = {}
    for i, t in enumerate(toks):
        by_unit.setdefault(t.word_index, []).append(i)
    for idxs in by_unit.values():
        assert idxs == list(range(idxs[0], idxs[-1] + 1))
        assert [toks[i].is_word_final for i in idxs] == [False] * (len(idxs) - 1) + [True]
