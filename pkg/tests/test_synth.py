import pytest

from pausekit.corpus import PauseKind, extract_pauses, label_alignment, parse_alignment_file
from pausekit.pausecat import DurationCategorizer, categorize
from pausekit.synth import (
    LEXICON, RpRule, SynthError, SyntheticSpeakerStyle, default_styles, synth_corpus, synth_vocabulary,
    write_corpus,
)


def rebuilt(u):
    a = parse_alignment_file(u.alignment)
    return [(e.after_word_index, e.kind, categorize(e.duration_ms)) for e in extract_pauses(a.words, a.punct_after)]


def intended(u):
    return [(e.after_word_index, e.kind, e.category) for e in u.events]


def test_every_third_word_category_one():
    style = SyntheticSpeakerStyle("s", RpRule("every_nth", n=3, phase=0), rp_category=1, pip_drop_rate=0.0)
    for u in synth_corpus([style], 50, seed=1):
        assert rebuilt(u) == intended(u)
        # clause positions 3, 6, 9 ... get an RP unless punctuation follows
        pos = 0
        expected = set()
        a = parse_alignment_file(u.alignment)
        for k, punct in enumerate(a.punct_after):
            pos += 1
            if k < len(a.words) - 1 and not punct and pos % 3 == 0:
                expected.add(k)
            if punct:
                pos = 0
        got = {i for i, kind, c in rebuilt(u) if kind == PauseKind.RP}
        assert got == expected
        assert all(c == 1 for _, kind, c in rebuilt(u) if kind == PauseKind.RP)


def test_pipeline_reproduces_labels_all_styles():
    for u in synth_corpus(default_styles(0.3), 400, seed=7):
        assert rebuilt(u) == intended(u)


def test_no_drop_means_every_punctuation_pauses():
    styles = default_styles(pip_drop_rate=0.0)
    vocab = synth_vocabulary()
    for u in synth_corpus(styles, 100, seed=2):
        s = label_alignment(parse_alignment_file(u.alignment), vocab, DurationCategorizer())
        punct = [i for i, t in enumerate(s.tokens) if t.is_punct]
        # the sentence-final mark has no following word, so no gap
        assert all(s.p_pip[i] == 1 for i in punct[:-1])


def test_round_robin_speakers():
    styles = default_styles()
    utts = synth_corpus(styles, 20, seed=0)
    assert [u.speaker for u in utts] == [styles[i % 8].speaker for i in range(20)]


def test_deterministic_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    write_corpus(a, synth_corpus(default_styles(), 30, seed=5))
    write_corpus(b, synth_corpus(default_styles(), 30, seed=5))
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    assert all((a / n).read_bytes() == (b / n).read_bytes() for n in names)
    other = synth_corpus(default_styles(), 30, seed=6)
    assert [u.alignment for u in other] != [u.alignment for u in synth_corpus(default_styles(), 30, seed=5)]


def test_vocabulary_covers_corpus():
    vocab = synth_vocabulary()
    for u in synth_corpus(default_styles(), 50, seed=0):
        s = label_alignment(parse_alignment_file(u.alignment), vocab, DurationCategorizer())
        assert all(t.text != vocab.unk_token for t in s.tokens)
    assert any(t.startswith("##") for t in vocab.entries)


def test_errors():
    with pytest.raises(SynthError):
        synth_corpus([], 5)
    small = {k: v for k, v in LEXICON.items() if k != "VERB"}
    with pytest.raises(SynthError):
        synth_corpus(default_styles(), 5, lexicon=small)
    with pytest.raises(ValueError):
        SyntheticSpeakerStyle("s", RpRule("never"), rp_category=4)
    with pytest.raises(ValueError):
        RpRule("sometimes")
