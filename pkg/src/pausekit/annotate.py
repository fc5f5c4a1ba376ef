"""Insert pause marks into text using a trained model."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence, TextIO

from .models import Decision, PauseModel, SentencePrediction, decide, predict
from .textnorm import Token, Vocabulary, normalize_sentence, units_to_tokens


@dataclass(frozen=True)
class AnnotatedToken:
    text: str
    pause_after: str | None = None


def mark(decision: Decision | None) -> str | None:
    if decision is None:
        return None
    return "sp" if decision.category is None else f"sp{decision.category}"


def annotate_tokens(tokens: Sequence[Token], pred: SentencePrediction, rp_threshold: float = 0.5,
                    pip_threshold: float = 0.5) -> list[AnnotatedToken]:
    decisions = decide(pred, tokens, rp_threshold, pip_threshold)
    words = [i for i, t in enumerate(tokens) if t.is_word_final and not t.is_punct]
    # nothing is spoken after the last word, so no pause can follow it or its punctuation
    for i in range(words[-1] if words else 0, len(tokens)):
        decisions[i] = None
    return [AnnotatedToken(t.canonical, mark(d)) for t, d in zip(tokens, decisions)]


@dataclass
class AnnotatedSentence:
    units: list[str]
    tokens: list[Token]
    annotated: list[AnnotatedToken]

    def render(self) -> str:
        """Units separated by spaces with each mark right after its unit."""
        marks = {tok.word_index: a.pause_after for tok, a in zip(self.tokens, self.annotated) if a.pause_after}
        out = []
        for i, u in enumerate(self.units):
            out.append(u)
            if i in marks:
                out.append(marks[i])
        return " ".join(out)


def annotate(texts: Sequence[str], speaker: str | None, model: PauseModel, vocab: Vocabulary,
             rp_threshold: float = 0.5, pip_threshold: float = 0.5) -> list[AnnotatedSentence]:
    units = [normalize_sentence(t) for t in texts]
    tokens = [units_to_tokens(u, vocab) for u in units]
    speakers = [speaker] * len(texts) if speaker is not None else None
    if model.speaker_table is not None:
        if speaker is None:
            raise ValueError("this model needs --speaker")
        model.speaker_table.index(speaker)
    preds = predict(model, tokens, speakers, vocab)
    return [AnnotatedSentence([u.text for u in us], toks, annotate_tokens(toks, p, rp_threshold, pip_threshold))
            for us, toks, p in zip(units, tokens, preds)]


def write_records(fh: TextIO, sentence_no: int, annotated: Sequence[AnnotatedToken]) -> None:
    for pos, a in enumerate(annotated):
        fh.write(json.dumps({"sentence": sentence_no, "position": pos, **asdict(a)}) + "\n")
