from collections import namedtuple

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from pausekit.evalkit import (
    PrPoint, category_confusion, eligible_mask, f_beta, position_pr, pr_curve, pr_table,
    sweep_threshold,
)
from pausekit.textnorm import Token

Dec = namedtuple("Dec", "kind category")


def word(text="w", cont=False, final=True, idx=0):
    return Token(text, is_continuation=cont, word_index=idx, is_word_final=final)


def punct(idx=0):
    return Token(",", is_punct=True, word_index=idx)


class TestFBeta:
    @pytest.mark.parametrize("p,r,b,expected", [
        (0.569, 0.272, 0.5, 0.467), (0.848, 0.996, 2.0, 0.962), (0.393, 0.187, 0.5, 0.322),
        (0.575, 0.261, 0.5, 0.463), (0.490, 0.253, 0.5, 0.413),
    ])
    def test_reported_values(self, p, r, b, expected):
        assert f_beta(p, r, b) == pytest.approx(expected, abs=1e-3)

    @given(st.floats(0.001, 1), st.sampled_from([0.5, 1.0, 2.0, 3.7]))
    def test_symmetric_point(self, x, b):
        assert f_beta(x, x, b) == pytest.approx(x)

    def test_zero(self):
        assert f_beta(0.0, 0.0, 0.5) == 0.0

    @given(st.floats(0.01, 1), st.floats(0.01, 1), st.floats(0.01, 0.99), st.floats(0.1, 4))
    def test_strictly_increasing(self, p, r, frac, b):
        lower = p * frac
        assume(p - lower > 1e-9)
        assert f_beta(lower, r, b) < f_beta(p, r, b)
        assert f_beta(r, lower, b) < f_beta(r, p, b)


def multi_subword_sentence():
    # "waiting , cat dog" -> wait ##ing , cat dog
    toks = [word("wait", final=False, idx=0), word("ing", cont=True, idx=0), punct(1), word("cat", idx=2), word("dog", idx=3)]
    return toks


class TestPositionPr:
    def test_perfect(self):
        toks = multi_subword_sentence()
        labels = [0, 1, 0, 1, 0]
        c = position_pr(labels, labels, toks, 0.5, "rp")
        assert (c.precision, c.recall) == (1.0, 1.0)

    def test_non_final_subword_ignored(self):
        toks = multi_subword_sentence()
        c = position_pr([0.9, 0.1, 0.9, 0.1, 0.1], [0, 1, 0, 0, 0], toks, 0.5, "rp")
        assert (c.tp, c.fp, c.fn) == (0, 0, 1)
        assert c.precision_undefined and c.precision == 0.0

    def test_pip_counts_punct_only(self):
        toks = multi_subword_sentence()
        c = position_pr([0.9, 0.9, 0.6, 0.9, 0.9], [0, 0, 1, 0, 0], toks, 0.5, "pip")
        assert (c.tp, c.fp, c.fn) == (1, 0, 0)

    def test_random_vs_recount(self):
        rng = np.random.default_rng(0)
        toks, labels = [], []
        for i in range(200):
            r = rng.random()
            if r < 0.2:
                toks.append(punct(i))
            elif r < 0.4:
                toks.append(word(final=False, idx=i))
            else:
                toks.append(word(idx=i))
            labels.append(int(rng.random() < 0.3))
        probs = rng.random(200)
        for kind in ("rp", "pip"):
            for thr in (0.1, 0.5, 0.77):
                tp = fp = fn = 0
                for t, p, y in zip(toks, probs, labels):
                    ok = t.is_punct if kind == "pip" else (t.is_word_final and not t.is_punct)
                    if not ok:
                        continue
                    if p >= thr and y:
                        tp += 1
                    elif p >= thr:
                        fp += 1
                    elif y:
                        fn += 1
                c = position_pr(probs, labels, toks, thr, kind)
                assert (c.tp, c.fp, c.fn) == (tp, fp, fn)
                assert c.tp + c.fn == sum(y for t, y in zip(toks, labels) if eligible_mask([t], kind)[0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            position_pr([0.1], [0, 1], [word(), word()], 0.5, "rp")


def exhaustive_best(probs, labels, beta):
    best = (-1.0, -1.0)
    for t in sorted(set(probs)):
        tp = sum(1 for p, y in zip(probs, labels) if p >= t and y)
        fp = sum(1 for p, y in zip(probs, labels) if p >= t and not y)
        fn = sum(1 for p, y in zip(probs, labels) if p < t and y)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn)
        f = (1 + beta ** 2) * prec * rec / (beta ** 2 * prec + rec) if prec + rec else 0.0
        best = max(best, (f, prec))
    return best


class TestSweep:
    def test_separable(self):
        toks = [word(idx=i) for i in range(6)]
        res = sweep_threshold([0.1, 0.2, 0.3, 0.7, 0.8, 0.9], [0, 0, 0, 1, 1, 1], toks, 0.5, "rp")
        assert res.f == 1.0 and 0.3 < res.threshold <= 0.7

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("beta", [0.5, 2.0])
    def test_twenty_points_vs_exhaustive(self, seed, beta):
        rng = np.random.default_rng(seed)
        probs = list(np.round(rng.random(20), 2))
        labels = [int(rng.random() < 0.4) for _ in range(20)]
        labels[0] = 1
        toks = [word(idx=i) for i in range(20)]
        res = sweep_threshold(probs, labels, toks, beta, "rp")
        f, prec = exhaustive_best(probs, labels, beta)
        assert res.f == pytest.approx(f) and res.precision == pytest.approx(prec)
        assert res.f == pytest.approx(max(p.f(beta) for p in res.points))

    def test_all_negative(self):
        with pytest.raises(ValueError, match="recall undefined"):
            sweep_threshold([0.3, 0.4], [0, 0], [word(), word()], 0.5, "rp")

    def test_empty(self):
        with pytest.raises(ValueError):
            sweep_threshold([0.3], [1], [punct()], 0.5, "rp")

    def test_candidate_cap(self):
        rng = np.random.default_rng(1)
        n = 5000
        res = sweep_threshold(rng.random(n), (rng.random(n) < 0.3).astype(int), [word(idx=i) for i in range(n)], 2.0, "rp")
        assert len(res.points) <= 1000


class TestPrCurve:
    def test_filter_low_precision(self):
        assert pr_curve([PrPoint(0.5, 0.05, 0.5)]) == []

    def test_identity_up_to_sort(self):
        pts = [PrPoint(0.2, 0.5, 0.9), PrPoint(0.8, 0.9, 0.2), PrPoint(0.5, 0.7, 0.5)]
        assert pr_curve(pts) == sorted(pts, key=lambda p: p.recall)

    def test_hand_set(self):
        pts = [PrPoint(0.1, 0.2, 0.95), PrPoint(0.3, 0.1, 0.8), PrPoint(0.5, 0.6, 0.1),
               PrPoint(0.6, 0.7, 0.3), PrPoint(0.9, 0.0, 0.0, True)]
        assert pr_curve(pts) == [pts[3], pts[0]]
        assert pr_table(pr_curve(pts)).splitlines()[0] == "threshold\tprecision\trecall"


class TestConfusion:
    def test_perfect(self):
        labels = [1, 2, 3, 0, 2]
        decs = [Dec("rp", c) if c else None for c in labels]
        m = category_confusion(decs, labels, "rp")
        assert m.counts == [[1, 0, 0], [0, 2, 0], [0, 0, 1]]

    def test_missed_and_spurious_excluded(self):
        m = category_confusion([None, Dec("pip", 2), Dec("pip", 3)], [3, 0, 1], "pip")
        assert m.counts == [[0, 0, 1], [0, 0, 0], [0, 0, 0]]

    def test_random_vs_tally(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(0, 4, 300)
        decs = [Dec("rp", int(rng.integers(1, 4))) if rng.random() < 0.6 else None for _ in range(300)]
        tally = np.zeros((3, 3), int)
        for d, y in zip(decs, labels):
            if d is not None and y:
                tally[y - 1, d.category - 1] += 1
        assert category_confusion(decs, labels, "rp").counts == tally.tolist()

    def test_kind_mismatch(self):
        with pytest.raises(ValueError):
            category_confusion([Dec("pip", 1)], [1], "rp")
