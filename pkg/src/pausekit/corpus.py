"""Labeled pause corpora from transcripts and word-level alignments.

Silences longer than 30 ms at a punctuation mark become punctuation-indicated
pauses (PIPs); silences longer than 50 ms at a bare word transition become
respiratory pauses (RPs).  Every token receives four labels: RP position,
RP category, PIP position and PIP category.  RP labels sit on the last
subword of the word before the gap, PIP labels on the punctuation token.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .pausecat import DurationCategorizer, categorize
from .textnorm import Token, Unit, Vocabulary, normalize_sentence, units_to_tokens

PIP_THRESHOLD_MS = 30
RP_THRESHOLD_MS = 50
DATASET_FORMAT = "pausekit-dataset"
DATASET_VERSION = 1


class AlignmentError(ValueError):
    """Malformed alignment file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line


class AlignmentMismatchError(AlignmentError):
    pass


class LabelConsistencyError(ValueError):
    pass


class DatasetFormatError(ValueError):
    pass


class PauseKind(str, enum.Enum):
    RP = "RP"
    PIP = "PIP"


@dataclass(frozen=True)
class AlignedWord:
    word: str
    start_ms: int
    end_ms: int

    def __post_init__(self):
        if self.start_ms < 0 or self.end_ms <= self.start_ms:
            raise ValueError(f"bad interval for {self.word!r}: [{self.start_ms}, {self.end_ms}]")


@dataclass(frozen=True)
class Alignment:
    speaker: str
    transcript: str
    words: tuple[AlignedWord, ...]
    units: tuple[Unit, ...]

    @property
    def punct_after(self) -> list[bool]:
        return punct_after_words(self.units)


@dataclass(frozen=True)
class PauseEvent:
    after_word_index: int
    duration_ms: int
    kind: PauseKind
    category: int | None = None


def punct_after_words(units: Sequence[Unit]) -> list[bool]:
    """For each word unit, whether a punctuation unit follows it."""
    flags = []
    for i, unit in enumerate(units):
        if not unit.is_punct:
            flags.append(i + 1 < len(units) and units[i + 1].is_punct)
    return flags


def parse_alignment_file(data: bytes | str, source: str | None = None) -> Alignment:
    """Parse the tab-separated alignment format.

    Line 1 ``#speaker<TAB>id``, line 2 ``#text<TAB>transcript``, then one
    ``word<TAB>start_ms<TAB>end_ms`` row per spoken word.  Spoken words must
    match the transcript's normalized words one-to-one and in order.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise AlignmentError(f"not UTF-8: {exc}", source=source) from None
    lines = data.splitlines()

    def header(lineno: int, key: str) -> str:
        if len(lines) < lineno:
            raise AlignmentError(f"missing #{key} header", lineno, source)
        parts = lines[lineno - 1].split("\t", 1)
        if len(parts) != 2 or parts[0] != f"#{key}" or not parts[1].strip():
            raise AlignmentError(f"expected '#{key}<TAB>value'", lineno, source)
        return parts[1].strip()

    speaker = header(1, "speaker")
    transcript = header(2, "text")

    words: list[AlignedWord] = []
    prev_end = None
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise AlignmentError("expected 'word<TAB>start_ms<TAB>end_ms'", lineno, source)
        word, start, end = parts
        try:
            start_ms, end_ms = int(start), int(end)
        except ValueError:
            raise AlignmentError(f"non-integer times {start!r}, {end!r}", lineno, source) from None
        if start_ms < 0 or end_ms <= start_ms:
            raise AlignmentError(f"end_ms {end_ms} must exceed start_ms {start_ms} >= 0", lineno, source)
        if prev_end is not None and start_ms < prev_end:
            raise AlignmentError(f"start_ms {start_ms} precedes previous end_ms {prev_end}", lineno, source)
        words.append(AlignedWord(word.strip().lower(), start_ms, end_ms))
        prev_end = end_ms
    if not words:
        raise AlignmentError("no aligned words", len(lines) + 1, source)

    try:
        units = normalize_sentence(transcript)
    except ValueError as exc:
        raise AlignmentError(str(exc), 2, source) from None
    spoken = [u.text for u in units if not u.is_punct]
    for k, (expected, got) in enumerate(zip(spoken, words)):
        if expected != got.word:
            raise AlignmentMismatchError(
                f"spoken word {k} is {got.word!r}, transcript has {expected!r}", k + 3, source)
    if len(spoken) != len(words):
        raise AlignmentMismatchError(
            f"transcript has {len(spoken)} words, alignment has {len(words)}", None, source)
    return Alignment(speaker, transcript, tuple(words), tuple(units))


def extract_pauses(words: Sequence[AlignedWord], punct_after: Sequence[bool]) -> list[PauseEvent]:
    """Uncategorized RP/PIP events from the gaps between consecutive words."""
    if len(punct_after) != len(words):
        raise ValueError("punct_after must have one flag per word")
    events = []
    for k in range(len(words) - 1):
        gap = words[k + 1].start_ms - words[k].end_ms
        if punct_after[k]:
            if gap > PIP_THRESHOLD_MS:
                events.append(PauseEvent(k, gap, PauseKind.PIP))
        elif gap > RP_THRESHOLD_MS:
            events.append(PauseEvent(k, gap, PauseKind.RP))
    return events


def _check_binary(name, vec):
    if any(v not in (0, 1) for v in vec):
        raise ValueError(f"{name} must be binary")


@dataclass(frozen=True)
class LabeledSentence:
    id: str
    speaker: str
    tokens: tuple[Token, ...]
    p_rp: tuple[int, ...]
    c_rp: tuple[int, ...]
    p_pip: tuple[int, ...]
    c_pip: tuple[int, ...]
    # raw pause durations per token (0 where no pause); kept so categories can be refitted
    rp_ms: tuple[int, ...] | None = field(default=None, compare=False)
    pip_ms: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("tokens", "p_rp", "c_rp", "p_pip", "c_pip", "rp_ms", "pip_ms"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(value))
        n = len(self.tokens)
        for name in ("p_rp", "c_rp", "p_pip", "c_pip"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{self.id}: {name} length != token count {n}")
        _check_binary("p_rp", self.p_rp)
        _check_binary("p_pip", self.p_pip)
        for i, tok in enumerate(self.tokens):
            if self.p_rp[i] and (tok.is_punct or not tok.is_word_final):
                raise ValueError(f"{self.id}: RP label on non-final or punctuation token {i}")
            if self.p_pip[i] and not tok.is_punct:
                raise ValueError(f"{self.id}: PIP label on non-punctuation token {i}")
            if (self.c_rp[i] != 0) != bool(self.p_rp[i]) or (self.c_pip[i] != 0) != bool(self.p_pip[i]):
                raise ValueError(f"{self.id}: category/position disagreement at token {i}")
            if not (0 <= self.c_rp[i] <= 3 and 0 <= self.c_pip[i] <= 3):
                raise ValueError(f"{self.id}: category out of range at token {i}")

    def __len__(self) -> int:
        return len(self.tokens)


def build_labels(tokens: Sequence[Token], events: Iterable[PauseEvent],
                 categorizer: DurationCategorizer, sentence_id: str = "", speaker: str = "") -> LabeledSentence:
    """Attach categorized pause events to tokens.

    ``after_word_index`` counts spoken words (punctuation excluded), the same
    indexing :func:`extract_pauses` uses.
    """
    n = len(tokens)
    # unit index -> position of its final token
    final_pos: dict[int, int] = {}
    unit_is_punct: dict[int, bool] = {}
    for pos, tok in enumerate(tokens):
        if tok.is_word_final:
            final_pos[tok.word_index] = pos
        unit_is_punct[tok.word_index] = tok.is_punct
    n_units = max(unit_is_punct) + 1 if unit_is_punct else 0
    word_units = [u for u in range(n_units) if not unit_is_punct.get(u, False)]

    p_rp, c_rp, p_pip, c_pip = ([0] * n for _ in range(4))
    rp_ms, pip_ms = [0] * n, [0] * n
    for ev in events:
        if not 0 <= ev.after_word_index < len(word_units) - 1:
            raise LabelConsistencyError(f"{sentence_id}: event after word {ev.after_word_index} has no following word")
        unit = word_units[ev.after_word_index]
        followed_by_punct = unit_is_punct.get(unit + 1, False)
        category = categorize(ev.duration_ms, categorizer)
        if category > 3:
            raise LabelConsistencyError(f"{sentence_id}: categorizer yields category {category} > 3")
        if ev.kind is PauseKind.RP:
            if followed_by_punct:
                raise LabelConsistencyError(f"{sentence_id}: RP after word {ev.after_word_index} sits at punctuation")
            pos = final_pos[unit]
            p_rp[pos], c_rp[pos], rp_ms[pos] = 1, category, ev.duration_ms
        else:
            if not followed_by_punct:
                raise LabelConsistencyError(f"{sentence_id}: PIP after word {ev.after_word_index} has no punctuation")
            pos = final_pos[unit + 1]
            p_pip[pos], c_pip[pos], pip_ms[pos] = 1, category, ev.duration_ms
    return LabeledSentence(sentence_id, speaker, tuple(tokens), p_rp, c_rp, p_pip, c_pip, rp_ms, pip_ms)


def label_alignment(alignment: Alignment, vocab: Vocabulary, categorizer: DurationCategorizer,
                    sentence_id: str = "") -> LabeledSentence:
    tokens = units_to_tokens(alignment.units, vocab)
    events = extract_pauses(alignment.words, alignment.punct_after)
    return build_labels(tokens, events, categorizer, sentence_id, alignment.speaker)


def relabel(sentence: LabeledSentence, categorizer: DurationCategorizer) -> LabeledSentence:
    """Recompute categories from stored durations with a new categorizer."""
    if sentence.rp_ms is None or sentence.pip_ms is None:
        raise DatasetFormatError(f"{sentence.id}: no stored durations to relabel from")
    c_rp = [categorize(d, categorizer) if d else 0 for d in sentence.rp_ms]
    c_pip = [categorize(d, categorizer) if d else 0 for d in sentence.pip_ms]
    return LabeledSentence(sentence.id, sentence.speaker, sentence.tokens, sentence.p_rp, c_rp,
                           sentence.p_pip, c_pip, sentence.rp_ms, sentence.pip_ms)


def pause_durations(dataset: Iterable[LabeledSentence]) -> list[int]:
    """All RP and PIP durations, pooled."""
    out = []
    for s in dataset:
        if s.rp_ms is None or s.pip_ms is None:
            raise DatasetFormatError(f"{s.id}: no stored durations")
        out.extend(d for d in s.rp_ms if d)
        out.extend(d for d in s.pip_ms if d)
    return out


@dataclass(frozen=True)
class CorpusStats:
    sentences: int = 0
    tokens: int = 0
    punctuation: int = 0
    speakers: int = 0
    rp_counts: tuple[int, int, int] = (0, 0, 0)
    pip_counts: tuple[int, int, int] = (0, 0, 0)

    @property
    def rp_total(self) -> int:
        return sum(self.rp_counts)

    @property
    def pip_total(self) -> int:
        return sum(self.pip_counts)

    def as_dict(self) -> dict:
        return {"sentences": self.sentences, "tokens": self.tokens, "punctuation": self.punctuation,
                "speakers": self.speakers, "rp_total": self.rp_total, "rp_counts": list(self.rp_counts),
                "pip_total": self.pip_total, "pip_counts": list(self.pip_counts)}


def compute_stats(dataset: Iterable[LabeledSentence]) -> CorpusStats:
    sentences = tokens = punct = 0
    speakers = set()
    rp, pip = Counter(), Counter()
    for s in dataset:
        sentences += 1
        tokens += len(s.tokens)
        punct += sum(t.is_punct for t in s.tokens)
        speakers.add(s.speaker)
        rp.update(c for c in s.c_rp if c)
        pip.update(c for c in s.c_pip if c)
    return CorpusStats(sentences, tokens, punct, len(speakers),
                       (rp[1], rp[2], rp[3]), (pip[1], pip[2], pip[3]))


# dataset files: JSON lines, format header first

_RECORD_FIELDS = ("id", "speaker", "tokens", "p_rp", "c_rp", "p_pip", "c_pip")


def _sentence_to_record(s: LabeledSentence) -> dict:
    record = {
        "id": s.id,
        "speaker": s.speaker,
        "tokens": [{"text": t.text, "is_continuation": t.is_continuation, "is_punct": t.is_punct}
                   for t in s.tokens],
        "p_rp": list(s.p_rp), "c_rp": list(s.c_rp),
        "p_pip": list(s.p_pip), "c_pip": list(s.c_pip),
    }
    if s.rp_ms is not None and s.pip_ms is not None:
        record["rp_ms"] = list(s.rp_ms)
        record["pip_ms"] = list(s.pip_ms)
    return record


def tokens_from_flags(flags: Sequence[tuple[str, bool, bool]]) -> list[Token]:
    """Rebuild tokens (with word indices and finality) from text/flag triples."""
    tokens = []
    unit = -1
    for i, (text, cont, punct) in enumerate(flags):
        if cont and (i == 0 or flags[i - 1][2]):
            raise ValueError(f"continuation token {i} has no word to continue")
        if not cont:
            unit += 1
        final = i + 1 == len(flags) or not flags[i + 1][1]
        tokens.append(Token(text, is_continuation=cont, is_punct=punct, word_index=unit, is_word_final=final))
    return tokens


def _record_to_sentence(record: dict) -> LabeledSentence:
    missing = [f for f in _RECORD_FIELDS if f not in record]
    if missing:
        raise ValueError(f"missing fields {missing}")
    flags = [(t["text"], bool(t["is_continuation"]), bool(t["is_punct"])) for t in record["tokens"]]
    return LabeledSentence(
        str(record["id"]), str(record["speaker"]), tuple(tokens_from_flags(flags)),
        record["p_rp"], record["c_rp"], record["p_pip"], record["c_pip"],
        record.get("rp_ms"), record.get("pip_ms"))


def write_dataset(path: str | Path, dataset: Iterable[LabeledSentence]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": DATASET_FORMAT, "version": DATASET_VERSION}) + "\n")
        for s in dataset:
            fh.write(json.dumps(_sentence_to_record(s), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_dataset(path: str | Path) -> list[LabeledSentence]:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file, no format header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError:
        raise DatasetFormatError(f"{path}:1: unreadable format header") from None
    if not isinstance(header, dict) or header.get("format") != DATASET_FORMAT:
        raise DatasetFormatError(f"{path}:1: not a {DATASET_FORMAT} file")
    if header.get("version") != DATASET_VERSION:
        raise DatasetFormatError(f"{path}:1: unsupported version {header.get('version')!r}, expected {DATASET_VERSION}")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            out.append(_record_to_sentence(json.loads(line)))
        except (json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: malformed record: {exc}") from None
    return out


def render_label_table(sentence: LabeledSentence) -> str:
    """Tab-separated view: token row followed by the four label rows."""
    rows = [("TOKENS", [t.canonical for t in sentence.tokens]),
            ("P-RP", sentence.p_rp), ("C-RP", sentence.c_rp),
            ("P-PIP", sentence.p_pip), ("C-PIP", sentence.c_pip)]
    return "".join("\t".join([name, *map(str, values)]) + "\n" for name, values in rows)
