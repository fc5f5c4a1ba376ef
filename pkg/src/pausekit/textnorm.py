"""Transcript normalization and WordPiece-style subword tokenization.

Words are lowercased, punctuation is split into standalone units and any run of
consecutive punctuation marks keeps only its first mark.  Words are then cut
into subwords by greedy longest-prefix matching; continuation pieces carry a
``##`` prefix in their canonical form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PUNCTUATION = frozenset(".,;:!?\"'()")
CONTINUATION_PREFIX = "##"
DEFAULT_UNK = "[UNK]"
DEFAULT_MAX_WORD_CHARS = 100

# an apostrophe between two word characters belongs to the word (don't, o'clock)
_UNIT_RE = re.compile(r"[^\s.,;:!?\"'()]+(?:'[^\s.,;:!?\"'()]+)*|[.,;:!?\"'()]")


class EmptySentenceError(ValueError):
    """Raised when a line contains nothing after normalization."""


@dataclass(frozen=True)
class Unit:
    """A normalized word or punctuation mark."""

    text: str
    is_punct: bool


@dataclass(frozen=True)
class Token:
    text: str
    is_continuation: bool = False
    is_punct: bool = False
    word_index: int = 0
    is_word_final: bool = True

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        if self.word_index < 0:
            raise ValueError("word_index must be non-negative")
        if self.is_punct and (self.is_continuation or not self.is_word_final):
            raise ValueError("punctuation tokens are whole, word-final units")

    @property
    def canonical(self) -> str:
        """Vocabulary form: continuation pieces get the ``##`` prefix."""
        return CONTINUATION_PREFIX + self.text if self.is_continuation else self.text

    def __str__(self) -> str:
        return self.canonical


class Vocabulary:
    """Ordered set of subword entries used by :func:`wordpiece_tokenize`."""

    def __init__(self, entries: Iterable[str], unk_token: str = DEFAULT_UNK,
                 max_word_chars: int = DEFAULT_MAX_WORD_CHARS):
        entries = list(entries)
        if unk_token not in entries:
            entries.insert(0, unk_token)
        if len(set(entries)) != len(entries):
            dupes = sorted({e for e in entries if entries.count(e) > 1})
            raise ValueError(f"duplicate vocabulary entries: {dupes[:5]}")
        if any(not e or e.isspace() for e in entries):
            raise ValueError("vocabulary entries must be non-empty")
        if max_word_chars < 1:
            raise ValueError("max_word_chars must be positive")
        self.entries: tuple[str, ...] = tuple(entries)
        self.unk_token = unk_token
        self.max_word_chars = max_word_chars
        self._index = {e: i for i, e in enumerate(self.entries)}

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Vocabulary) and self.entries == other.entries
                and self.unk_token == other.unk_token
                and self.max_word_chars == other.max_word_chars)

    def index(self, entry: str) -> int:
        """Position of ``entry``; unknown entries map to the unk token."""
        return self._index.get(entry, self._index[self.unk_token])

    @classmethod
    def load(cls, path: str | Path, unk_token: str = DEFAULT_UNK,
             max_word_chars: int = DEFAULT_MAX_WORD_CHARS) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        entries = [ln.strip() for ln in lines if ln.strip()]
        return cls(entries, unk_token=unk_token, max_word_chars=max_word_chars)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.entries) + "\n", encoding="utf-8")


def normalize_sentence(raw: str) -> list[Unit]:
    """Lowercase, split off punctuation and collapse punctuation runs.

    >>> [u.text for u in normalize_sentence('He said, "No?!"')]
    ['he', 'said', ',', 'no', '?']
    """
    units: list[Unit] = []
    for match in _UNIT_RE.finditer(raw.lower()):
        text = match.group(0)
        is_punct = text in PUNCTUATION
        if is_punct and units and units[-1].is_punct:
            continue
        units.append(Unit(text, is_punct))
    if not units:
        raise EmptySentenceError(f"nothing left after normalization: {raw!r}")
    return units


def wordpiece_tokenize(word: str, vocab: Vocabulary, word_index: int = 0) -> list[Token]:
    """Greedy longest-match subwording of a single normalized word."""
    if not word or any(ch.isspace() for ch in word):
        raise ValueError(f"not a single normalized word: {word!r}")
    unk = [Token(vocab.unk_token, word_index=word_index)]
    if len(word) > vocab.max_word_chars:
        return unk

    pieces: list[str] = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while end > start:
            candidate = word[start:end]
            if start > 0:
                candidate = CONTINUATION_PREFIX + candidate
            if candidate in vocab:
                piece = word[start:end]
                break
            end -= 1
        if piece is None:
            return unk
        pieces.append(piece)
        start = end

    last = len(pieces) - 1
    return [Token(p, is_continuation=i > 0, word_index=word_index, is_word_final=i == last)
            for i, p in enumerate(pieces)]


def units_to_tokens(units: Sequence[Unit], vocab: Vocabulary) -> list[Token]:
    tokens: list[Token] = []
    for idx, unit in enumerate(units):
        if unit.is_punct:
            tokens.append(Token(unit.text, is_punct=True, word_index=idx))
        else:
            tokens.extend(wordpiece_tokenize(unit.text, vocab, word_index=idx))
    return tokens


def tokenize_sentence(raw: str, vocab: Vocabulary) -> list[Token]:
    """Normalize ``raw`` and tokenize every unit; ``word_index`` counts units."""
    return units_to_tokens(normalize_sentence(raw), vocab)


def detokenize(tokens: Sequence[Token]) -> list[str]:
    """Re-join continuation pieces into the unit sequence."""
    out: list[str] = []
    for tok in tokens:
        if tok.is_continuation and out:
            out[-1] += tok.text
        else:
            out.append(tok.text)
    return out
