"""Unbalanced F-score, last-subword precision/recall and threshold sweeps."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .textnorm import Token

MAX_CANDIDATES = 1000
CURVE_FLOOR = 0.1
KINDS = ("rp", "pip")


def f_beta(precision: float, recall: float, beta: float) -> float:
    """``(1 + b^2) P R / (b^2 P + R)``; 0.0 when both P and R are 0."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if not (0 <= precision <= 1 and 0 <= recall <= 1):
        raise ValueError(f"precision/recall out of [0, 1]: {precision}, {recall}")
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1 + b2) * precision * recall / denom


def eligible_mask(tokens: Sequence[Token], kind: str) -> np.ndarray:
    """Positions that count for a task: last subwords for RPs, punctuation for PIPs."""
    if kind == "rp":
        return np.array([t.is_word_final and not t.is_punct for t in tokens], dtype=bool)
    if kind == "pip":
        return np.array([t.is_punct for t in tokens], dtype=bool)
    raise ValueError(f"unknown task kind {kind!r}")


@dataclass(frozen=True)
class PrCounts:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    precision_undefined: bool = False


def _pr(tp: int, fp: int, fn: int) -> PrCounts:
    if tp + fn == 0:
        raise ValueError("no positive labels at eligible positions: recall undefined")
    undefined = tp + fp == 0
    precision = 0.0 if undefined else tp / (tp + fp)
    return PrCounts(tp, fp, fn, precision, tp / (tp + fn), undefined)


def _flat(probabilities, labels, tokens, kind):
    probs = np.asarray(probabilities, dtype=float).ravel()
    labs = np.asarray(labels).ravel()
    if not (len(probs) == len(labs) == len(tokens)):
        raise ValueError(f"length mismatch: {len(probs)} probabilities, {len(labs)} labels, {len(tokens)} tokens")
    mask = eligible_mask(tokens, kind)
    return probs[mask], labs[mask] != 0


def position_pr(probabilities, labels, tokens: Sequence[Token], threshold: float, kind: str) -> PrCounts:
    """Precision/recall of ``prob >= threshold`` over the task's eligible tokens."""
    probs, pos = _flat(probabilities, labels, tokens, kind)
    pred = probs >= threshold
    return _pr(int(np.sum(pred & pos)), int(np.sum(pred & ~pos)), int(np.sum(~pred & pos)))


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float
    precision_undefined: bool = False

    def f(self, beta: float) -> float:
        return f_beta(self.precision, self.recall, beta)


@dataclass(frozen=True)
class SweepResult:
    threshold: float
    f: float
    precision: float
    recall: float
    beta: float
    points: tuple[PrPoint, ...]


def candidate_thresholds(probs: np.ndarray) -> np.ndarray:
    values = np.unique(probs)
    if values.size > MAX_CANDIDATES:
        values = np.unique(np.quantile(values, np.linspace(0.0, 1.0, MAX_CANDIDATES), method="lower"))
    return values


def sweep_threshold(probabilities, labels, tokens: Sequence[Token], beta: float, kind: str) -> SweepResult:
    """Best F-beta over thresholds drawn from the predicted probabilities.

    Ties in F go to the point with higher precision.
    """
    probs, pos = _flat(probabilities, labels, tokens, kind)
    if probs.size == 0:
        raise ValueError("no eligible predictions to sweep")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise ValueError("all labels are 0 at eligible positions: recall undefined")

    order = np.argsort(-probs, kind="stable")
    sorted_probs = probs[order]
    cum_tp = np.cumsum(pos[order])
    points = []
    best = None
    for t in candidate_thresholds(probs)[::-1]:
        # number of predictions >= t in the descending order
        k = int(np.searchsorted(-sorted_probs, -t, side="right"))
        tp = int(cum_tp[k - 1]) if k else 0
        c = _pr(tp, k - tp, n_pos - tp)
        point = PrPoint(float(t), c.precision, c.recall, c.precision_undefined)
        points.append(point)
        key = (point.f(beta), point.precision)
        if best is None or key > best[0]:
            best = (key, point)
    p = best[1]
    return SweepResult(p.threshold, best[0][0], p.precision, p.recall, beta, tuple(points))


def pr_curve(points: Iterable[PrPoint], floor: float = CURVE_FLOOR) -> list[PrPoint]:
    """Points with precision and recall both above ``floor``, sorted by recall."""
    kept = [p for p in points if not p.precision_undefined and p.precision > floor and p.recall > floor]
    return sorted(kept, key=lambda p: p.recall)


def pr_table(points: Sequence[PrPoint]) -> str:
    lines = ["threshold\tprecision\trecall"]
    lines += [f"{p.threshold:.6f}\t{p.precision:.6f}\t{p.recall:.6f}" for p in points]
    return "\n".join(lines) + "\n"


@dataclass
class ConfusionMatrix:
    """counts[label - 1][predicted - 1] over positions where both indicate a pause."""

    counts: list[list[int]]

    @classmethod
    def zeros(cls, n: int = 3) -> "ConfusionMatrix":
        return cls([[0] * n for _ in range(n)])

    def add(self, label: int, predicted: int) -> None:
        self.counts[label - 1][predicted - 1] += 1

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def accuracy(self) -> float:
        total = self.total
        return sum(self.counts[i][i] for i in range(len(self.counts))) / total if total else 0.0


def category_confusion(decisions: Sequence, labels: Sequence[int], kind: str) -> ConfusionMatrix:
    """Tally predicted vs labeled categories on tokens that are pauses in both.

    ``decisions`` holds ``None`` or objects with ``kind`` and ``category``;
    labeled pauses the model missed are left out.
    """
    if len(decisions) != len(labels):
        raise ValueError("decisions and labels differ in length")
    matrix = ConfusionMatrix.zeros()
    for dec, lab in zip(decisions, labels):
        if dec is None:
            continue
        if dec.kind != kind:
            raise ValueError(f"decision of kind {dec.kind!r} in a {kind!r} confusion matrix")
        if lab:
            matrix.add(int(lab), int(dec.category))
    return matrix


def write_report(path: str | Path, report: dict) -> None:
    def default(obj):
        if isinstance(obj, (PrPoint, SweepResult)):
            return asdict(obj)
        if isinstance(obj, ConfusionMatrix):
            return obj.counts
        if isinstance(obj, np.generic):
            return obj.item()
        raise TypeError(f"cannot serialize {type(obj).__name__}")

    Path(path).write_text(json.dumps(report, indent=2, default=default) + "\n", encoding="utf-8")
