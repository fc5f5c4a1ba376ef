from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pausekit.corpus import (
    AlignedWord, AlignmentError, AlignmentMismatchError, CorpusStats, DatasetFormatError,
    LabelConsistencyError, LabeledSentence, PauseEvent, PauseKind, build_labels, compute_stats,
    extract_pauses, label_alignment, parse_alignment_file, read_dataset, relabel,
    render_label_table, write_dataset,
)
from pausekit.pausecat import DurationCategorizer
from pausekit.textnorm import Vocabulary, tokenize_sentence

from synthutt import brute_force_labels, random_utterance

GOLDEN = Path(__file__).parent / "data" / "golden"
DEFAULT = DurationCategorizer()


def alignment_text(words, text="a b c", speaker="spk"):
    rows = "".join(f"{w}\t{s}\t{e}\n" for w, s, e in words)
    return f"#speaker\t{speaker}\n#text\t{text}\n{rows}"


class TestParse:
    def test_valid(self):
        a = parse_alignment_file(alignment_text([("a", 0, 100), ("b", 100, 200), ("c", 260, 300)]).encode())
        assert a.speaker == "spk" and [w.word for w in a.words] == ["a", "b", "c"]
        assert a.words[2] == AlignedWord("c", 260, 300)

    def test_bad_interval_line_number(self):
        text = alignment_text([("a", 0, 100), ("b", 300, 200), ("c", 300, 400)])
        with pytest.raises(AlignmentError) as err:
            parse_alignment_file(text)
        assert err.value.line == 4 and "line 4" in str(err.value)

    def test_overlap(self):
        with pytest.raises(AlignmentError) as err:
            parse_alignment_file(alignment_text([("a", 0, 100), ("b", 90, 200), ("c", 200, 300)]))
        assert err.value.line == 4

    @pytest.mark.parametrize("spoken", [["a", "x", "c"], ["a", "b"], ["a", "b", "c", "d"]])
    def test_mismatch(self, spoken):
        words = [(w, 100 * i, 100 * i + 50) for i, w in enumerate(spoken)]
        with pytest.raises(AlignmentMismatchError):
            parse_alignment_file(alignment_text(words))

    def test_transcript_normalized_before_matching(self):
        a = parse_alignment_file(alignment_text([("hello", 0, 10), ("world", 10, 20)], text="Hello!! World."))
        assert a.punct_after == [True, True]

    @pytest.mark.parametrize("text,line", [
        ("#spk\tx\n#text\ta\na\t0\t1\n", 1),
        ("#speaker\tx\n#txt\ta\na\t0\t1\n", 2),
        ("#speaker\tx\n#text\ta\na\t0\n", 3),
        ("#speaker\tx\n#text\ta\na\tzero\t1\n", 3),
        ("#speaker\tx\n#text\ta\n", 3),
    ])
    def test_malformed(self, text, line):
        with pytest.raises(AlignmentError) as err:
            parse_alignment_file(text)
        assert err.value.line == line


def words_with_gaps(gaps):
    t, out = 0, []
    for i in range(len(gaps) + 1):
        out.append(AlignedWord(f"w{i}", t, t + 100))
        t += 100 + (gaps[i] if i < len(gaps) else 0)
    return out


class TestExtractPauses:
    def test_below_rp_threshold(self):
        assert extract_pauses(words_with_gaps([45]), [False, False]) == []

    def test_rp(self):
        assert extract_pauses(words_with_gaps([55]), [False, False]) == [PauseEvent(0, 55, PauseKind.RP)]

    def test_pip_and_zero(self):
        assert extract_pauses(words_with_gaps([35, 0, 0]), [True, True, False, False]) == [PauseEvent(0, 35, PauseKind.PIP)]

    @pytest.mark.parametrize("gap,punct,kind", [(30, True, None), (31, True, "PIP"), (50, False, None), (51, False, "RP"), (40, False, None)])
    def test_strict_thresholds(self, gap, punct, kind):
        events = extract_pauses(words_with_gaps([gap]), [punct, False])
        assert [e.kind.value for e in events] == ([kind] if kind else [])

    @given(st.lists(st.integers(0, 2000), min_size=1, max_size=10), st.integers(0, 10 ** 6), st.data())
    def test_translation_invariant(self, gaps, shift, data):
        flags = data.draw(st.lists(st.booleans(), min_size=len(gaps) + 1, max_size=len(gaps) + 1))
        words = words_with_gaps(gaps)
        moved = [AlignedWord(w.word, w.start_ms + shift, w.end_ms + shift) for w in words]
        assert extract_pauses(words, flags) == extract_pauses(moved, flags)


class TestBuildLabels:
    def test_golden_fig1_sentence(self):
        vocab = Vocabulary.load(GOLDEN / "vocab.txt")
        a = parse_alignment_file((GOLDEN / "fig1.align").read_bytes())
        s = label_alignment(a, vocab, DEFAULT, "fig1")
        assert render_label_table(s).encode() == (GOLDEN / "expected_labels.txt").read_bytes()

    def test_rp_on_last_subword(self, vocab):
        tokens = tokenize_sentence("waiting for the train", vocab)
        s = build_labels(tokens, [PauseEvent(0, 120, PauseKind.RP)], DEFAULT)
        assert s.p_rp == (0, 1, 0, 0, 0) and s.c_rp == (0, 1, 0, 0, 0)

    def test_no_events(self, vocab):
        s = build_labels(tokenize_sentence("hello, world", vocab), [], DEFAULT)
        assert s.p_rp == s.c_rp == s.p_pip == s.c_pip == (0, 0, 0)

    def test_long_pip_on_comma(self, vocab):
        s = build_labels(tokenize_sentence("hello, world", vocab), [PauseEvent(0, 800, PauseKind.PIP)], DEFAULT)
        assert s.p_pip == (0, 1, 0) and s.c_pip == (0, 3, 0)

    def test_inconsistent_kinds(self, vocab):
        tokens = tokenize_sentence("hello, world cat", vocab)
        with pytest.raises(LabelConsistencyError):
            build_labels(tokens, [PauseEvent(0, 100, PauseKind.RP)], DEFAULT)
        with pytest.raises(LabelConsistencyError):
            build_labels(tokens, [PauseEvent(1, 100, PauseKind.PIP)], DEFAULT)
        with pytest.raises(LabelConsistencyError):
            build_labels(tokens, [PauseEvent(2, 100, PauseKind.RP)], DEFAULT)

    def test_invalid_sentence_rejected(self, vocab):
        tokens = tokenize_sentence("waiting cat", vocab)
        with pytest.raises(ValueError):
            LabeledSentence("x", "s", tokens, (1, 0, 0), (1, 0, 0), (0, 0, 0), (0, 0, 0))


def test_random_utterances_match_brute_force(char_vocab):
    rng = np.random.default_rng(123)
    for n in range(300):
        text, spoken, gaps = random_utterance(rng)
        s = label_alignment(parse_alignment_file(text), char_vocab, DEFAULT, f"u{n}")
        expected = brute_force_labels(text.splitlines()[1].split("\t", 1)[1], spoken, gaps, char_vocab)
        assert [list(s.p_rp), list(s.c_rp), list(s.p_pip), list(s.c_pip)] == [list(v) for v in expected]


def small_dataset(vocab):
    rng = np.random.default_rng(5)
    out = []
    for n in range(40):
        text, _, _ = random_utterance(rng, speaker=f"s{n % 3}")
        out.append(label_alignment(parse_alignment_file(text), vocab, DEFAULT, f"u{n}"))
    return out


class TestStats:
    def test_empty(self):
        assert compute_stats([]) == CorpusStats()

    def test_direct_count(self, vocab):
        tokens = tokenize_sentence("hello, world, cat abc", vocab)
        s = build_labels(tokens, [PauseEvent(0, 400, PauseKind.PIP), PauseEvent(1, 500, PauseKind.PIP),
                                  PauseEvent(2, 100, PauseKind.RP)], DEFAULT)
        st_ = compute_stats([s])
        assert st_.rp_counts == (1, 0, 0) and st_.pip_counts == (0, 2, 0)
        assert (st_.sentences, st_.tokens, st_.punctuation, st_.speakers) == (1, 6, 2, 1)
        assert st_.rp_total == 1 and st_.pip_total == 2

    def test_recount(self, char_vocab):
        rng = np.random.default_rng(9)
        data = []
        for n in range(100):
            text, _, _ = random_utterance(rng, speaker=f"s{rng.integers(7)}")
            data.append(label_alignment(parse_alignment_file(text), char_vocab, DEFAULT, f"u{n}"))
        st_ = compute_stats(data)
        flat = [(c, p) for s in data for c, p in zip(s.c_rp, s.c_pip)]
        assert st_.tokens == len(flat)
        assert st_.rp_counts == tuple(sum(1 for c, _ in flat if c == k) for k in (1, 2, 3))
        assert st_.pip_counts == tuple(sum(1 for _, p in flat if p == k) for k in (1, 2, 3))
        assert st_.speakers == len({s.speaker for s in data})
        assert st_.punctuation == sum(t.is_punct for s in data for t in s.tokens)


class TestDatasetIO:
    def test_round_trip(self, tmp_path, char_vocab):
        data = small_dataset(char_vocab)
        p = tmp_path / "d.jsonl"
        write_dataset(p, data)
        back = read_dataset(p)
        assert back == data
        assert [s.rp_ms for s in back] == [s.rp_ms for s in data]

    def test_corrupt_line(self, tmp_path, char_vocab):
        p = tmp_path / "d.jsonl"
        write_dataset(p, small_dataset(char_vocab)[:3])
        lines = p.read_text().splitlines()
        lines[2] = lines[2][:-5]
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError, match=":3:"):
            read_dataset(p)

    def test_field_order_permutation(self, tmp_path, char_vocab):
        import json
        data = small_dataset(char_vocab)[:5]
        p = tmp_path / "d.jsonl"
        write_dataset(p, data)
        lines = p.read_text().splitlines()
        shuffled = [lines[0]] + [json.dumps(dict(reversed(list(json.loads(ln).items())))) for ln in lines[1:]]
        p.write_text("\n".join(shuffled) + "\n")
        assert read_dataset(p) == data

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"format": "pausekit-dataset", "version": 99}\n')
        with pytest.raises(DatasetFormatError, match="version"):
            read_dataset(p)

    def test_relabel(self, char_vocab):
        s = small_dataset(char_vocab)
        coarse = DurationCategorizer((2000, 3000))
        for orig in s:
            r = relabel(orig, coarse)
            assert r.p_rp == orig.p_rp and all(c in (0, 1) for c in r.c_rp)
