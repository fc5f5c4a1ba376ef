"""Synthetic multi-speaker corpora with known pause styles.

Sentences come from a small part-of-speech grammar.  Each speaker style
decides deterministically where respiratory pauses go and which category
every pause gets; word timings are then laid out so that the ingestion
pipeline recovers exactly those pauses.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import PauseEvent, PauseKind
from .textnorm import PUNCTUATION, Vocabulary, wordpiece_tokenize

LEXICON: dict[str, tuple[str, ...]] = {
    "DET": ("the", "a", "this", "that", "every", "some"),
    "ADJ": ("quiet", "silver", "ancient", "gentle", "crowded", "hollow", "bright", "restless"),
    "NOUN": ("train", "chapter", "novel", "garden", "window", "captain", "river", "letter", "village", "lantern"),
    "VERB": ("reads", "follows", "watches", "carries", "remembers", "finds", "crosses", "opens"),
    "ADV": ("slowly", "often", "quietly", "suddenly", "again", "carefully"),
    "PREP": ("near", "under", "beyond", "across", "behind", "beside"),
    "PRON": ("she", "he", "they", "someone", "nobody"),
    "CONJ": ("and", "but", "while", "because"),
}

# clause templates; optional slots marked with "?"
TEMPLATES: tuple[tuple[str, ...], ...] = (
    ("DET", "ADJ?", "NOUN", "VERB", "DET", "ADJ?", "NOUN", "PREP?", "DET?", "NOUN?"),
    ("PRON", "ADV?", "VERB", "DET", "ADJ?", "NOUN", "PREP", "DET", "ADJ?", "NOUN"),
    ("DET", "NOUN", "PREP", "DET", "ADJ?", "NOUN", "VERB", "ADV?"),
    ("PRON", "VERB", "DET", "ADJ", "NOUN", "ADV?"),
)

# per category: mean, sd and truncation range (ms), well inside the default 300/700 cut-offs
CATEGORY_DURATIONS = {1: (180.0, 40.0, (60, 270)), 2: (500.0, 60.0, (330, 670)), 3: (900.0, 100.0, (740, 1400))}
WORD_MS = (150, 450)
QUIET_GAP_MS = (0, 25)
PIECE_SPLIT_MIN = 7


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class RpRule:
    """Where a speaker takes respiratory pauses.

    ``every_nth``: after word ``j`` of a clause (1-based) when
    ``j % n == phase``.  ``after_class``: after words of the listed grammar
    classes.  Clause-final and sentence-final words never get an RP.
    """

    kind: str
    n: int = 3
    phase: int = 0
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("every_nth", "after_class", "never"):
            raise ValueError(f"unknown rp rule {self.kind!r}")
        if self.kind == "every_nth" and self.n < 1:
            raise ValueError("n must be >= 1")

    def applies(self, position_in_clause: int, word_class: str) -> bool:
        if self.kind == "every_nth":
            return position_in_clause % self.n == self.phase % self.n
        if self.kind == "after_class":
            return word_class in self.classes
        return False


@dataclass(frozen=True)
class SyntheticSpeakerStyle:
    speaker: str
    rp_rule: RpRule
    rp_category: int = 1
    pip_category: int = 2
    pip_drop_rate: float = 0.0

    def __post_init__(self):
        if self.rp_category not in CATEGORY_DURATIONS or self.pip_category not in CATEGORY_DURATIONS:
            raise ValueError("categories must be 1, 2 or 3")
        if not 0.0 <= self.pip_drop_rate <= 1.0:
            raise ValueError("pip_drop_rate must lie in [0, 1]")


def default_styles(pip_drop_rate: float = 0.2) -> list[SyntheticSpeakerStyle]:
    """Eight speakers whose RP habits contradict each other."""
    rules = [
        RpRule("after_class", classes=("NOUN",)),
        RpRule("after_class", classes=("VERB",)),
        RpRule("after_class", classes=("ADJ",)),
        RpRule("after_class", classes=("PREP", "CONJ")),
        RpRule("after_class", classes=("DET",)),
        RpRule("after_class", classes=("ADV", "PRON")),
        RpRule("every_nth", n=2, phase=0),
        RpRule("every_nth", n=3, phase=1),
    ]
    cats = [(1, 2), (2, 1), (1, 3), (2, 2), (1, 1), (3, 2), (2, 3), (1, 1)]
    return [SyntheticSpeakerStyle(f"spk{i}", r, rc, pc, pip_drop_rate)
            for i, (r, (rc, pc)) in enumerate(zip(rules, cats))]


@dataclass
class SynthUtterance:
    id: str
    speaker: str
    text: str
    words: list[str]
    word_classes: list[str]
    events: list[PauseEvent]
    alignment: str = ""


def word_pieces(word: str) -> list[str]:
    if len(word) < PIECE_SPLIT_MIN:
        return [word]
    cut = len(word) // 2
    return [word[:cut], "##" + word[cut:]]


def synth_vocabulary(lexicon: dict[str, Sequence[str]] = LEXICON) -> Vocabulary:
    entries = ["[UNK]"]
    for words in lexicon.values():
        for w in words:
            for piece in word_pieces(w):
                if piece not in entries:
                    entries.append(piece)
    entries += [p for p in ".,;:!?\"'()" if p not in entries]
    # greedy matching can strand a split word (``quiet`` + ``##ly``); keep those whole
    while True:
        vocab = Vocabulary(entries)
        stranded = [w for ws in lexicon.values() for w in ws
                    if wordpiece_tokenize(w, vocab)[0].text == vocab.unk_token and w not in entries]
        if not stranded:
            return vocab
        entries += sorted(set(stranded))


def _sentence(rng: np.random.Generator, lexicon) -> list[tuple[str, str]]:
    """(text, class) pairs; punctuation units carry class 'PUNCT'."""
    n_clauses = int(rng.integers(1, 4))
    units: list[tuple[str, str]] = []
    for c in range(n_clauses):
        template = TEMPLATES[rng.integers(len(TEMPLATES))]
        if c > 0:
            units.append(("and" if rng.random() < 0.5 else lexicon["CONJ"][rng.integers(len(lexicon["CONJ"]))], "CONJ"))
        for slot in template:
            optional = slot.endswith("?")
            cls = slot.rstrip("?")
            if optional and rng.random() < 0.5:
                continue
            words = lexicon[cls]
            units.append((words[rng.integers(len(words))], cls))
        if c == n_clauses - 1:
            units.append((".", "PUNCT"))
        else:
            units.append((";" if rng.random() < 0.1 else ",", "PUNCT"))
    return units


def _plan_events(units: list[tuple[str, str]], style: SyntheticSpeakerStyle, seed: int, text: str) -> list[PauseEvent]:
    # pure function of (sentence, seed)
    drop_rng = np.random.default_rng([seed, zlib.crc32(text.encode("utf-8"))])
    events = []
    word_no = -1
    pos_in_clause = 0
    n_words = sum(1 for _, c in units if c != "PUNCT")
    for i, (_, cls) in enumerate(units):
        if cls == "PUNCT":
            pos_in_clause = 0
            continue
        word_no += 1
        pos_in_clause += 1
        if word_no == n_words - 1:
            break
        followed_by_punct = i + 1 < len(units) and units[i + 1][1] == "PUNCT"
        if followed_by_punct:
            if drop_rng.random() >= style.pip_drop_rate:
                events.append(PauseEvent(word_no, 0, PauseKind.PIP, style.pip_category))
        elif style.rp_rule.applies(pos_in_clause, cls):
            events.append(PauseEvent(word_no, 0, PauseKind.RP, style.rp_category))
    return events


def _pause_ms(rng: np.random.Generator, category: int) -> int:
    mean, sd, (lo, hi) = CATEGORY_DURATIONS[category]
    while True:
        d = int(round(rng.normal(mean, sd)))
        if lo <= d <= hi:
            return d


def _render(units: list[tuple[str, str]]) -> str:
    out = ""
    for text, cls in units:
        if cls == "PUNCT":
            out += text
        else:
            out += (" " if out else "") + text
    return out[0].upper() + out[1:]


def synth_corpus(styles: Sequence[SyntheticSpeakerStyle], n_sentences: int, seed: int = 0,
                 lexicon: dict[str, Sequence[str]] = LEXICON) -> list[SynthUtterance]:
    """Generate utterances with alignments; speakers are assigned round-robin."""
    if not styles:
        raise SynthError("at least one speaker style is required")
    needed = {slot.rstrip("?") for t in TEMPLATES for slot in t} | {"CONJ"}
    missing = sorted(c for c in needed if not lexicon.get(c))
    if missing:
        raise SynthError(f"lexicon has no words for grammar classes {missing}")
    bad = sorted(w for ws in lexicon.values() for w in ws if not w or set(w) & PUNCTUATION or not w.islower() or " " in w)
    if bad:
        raise SynthError(f"lexicon words must be lowercase single words without punctuation: {bad[:5]}")

    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_sentences):
        style = styles[i % len(styles)]
        units = _sentence(rng, lexicon)
        text = _render(units)
        planned = _plan_events(units, style, seed, text)
        words = [t for t, c in units if c != "PUNCT"]
        classes = [c for _, c in units if c != "PUNCT"]

        by_word = {e.after_word_index: e for e in planned}
        t = int(rng.integers(0, 300))
        rows, events = [], []
        for k, w in enumerate(words):
            dur = int(rng.integers(*WORD_MS))
            rows.append(f"{w}\t{t}\t{t + dur}")
            t += dur
            if k == len(words) - 1:
                break
            ev = by_word.get(k)
            if ev is None:
                gap = int(rng.integers(QUIET_GAP_MS[0], QUIET_GAP_MS[1] + 1))
            else:
                gap = _pause_ms(rng, ev.category)
                events.append(PauseEvent(k, gap, ev.kind, ev.category))
            t += gap
        uid = f"utt{i:05d}"
        alignment = f"#speaker\t{style.speaker}\n#text\t{text}\n" + "\n".join(rows) + "\n"
        out.append(SynthUtterance(uid, style.speaker, text, words, classes, events, alignment))
    return out


def write_corpus(directory: str | Path, utterances: Sequence[SynthUtterance], vocab: Vocabulary | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for u in utterances:
        (directory / f"{u.id}.align").write_text(u.alignment, encoding="utf-8")
    (vocab or synth_vocabulary()).save(directory / "vocab.txt")
