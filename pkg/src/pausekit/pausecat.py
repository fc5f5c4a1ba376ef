"""Pause-duration categories from a one-dimensional Gaussian mixture.

Durations are fitted with EM, adjacent components are intersected to get raw
cut-off points, and the cut-offs are rounded to whole hundreds of
milliseconds.  With the default thresholds (300, 700) a pause is brief below
300 ms, medium from 300 to 700 ms inclusive and long above 700 ms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

VARIANCE_FLOOR = 1.0
DEFAULT_THRESHOLDS = (300, 700)


class DegenerateDataError(ValueError):
    pass


class ThresholdCollisionError(ValueError):
    pass


@dataclass(frozen=True)
class Gmm1D:
    weights: tuple[float, ...]
    means: tuple[float, ...]
    variances: tuple[float, ...]
    log_likelihood: float = float("nan")
    # mean per-sample log-likelihood after initialization and after every EM step
    history: tuple[float, ...] = field(default=(), compare=False, repr=False)
    n_iter: int = 0

    def __post_init__(self):
        k = len(self.weights)
        if k < 1 or len(self.means) != k or len(self.variances) != k:
            raise ValueError("weights, means and variances must share length >= 1")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must be non-negative and sum to 1")
        if list(self.means) != sorted(self.means):
            raise ValueError("components must be sorted by mean")
        if any(v < VARIANCE_FLOOR - 1e-12 for v in self.variances):
            raise ValueError("variance below floor")

    @property
    def K(self) -> int:
        return len(self.weights)

    def component_pdf(self, x, k: int):
        """Weighted density ``w_k * N(x; mu_k, var_k)``."""
        x = np.asarray(x, dtype=float)
        var = self.variances[k]
        return self.weights[k] * np.exp(-0.5 * (x - self.means[k]) ** 2 / var) / math.sqrt(2 * math.pi * var)


def _log_joint(x: np.ndarray, w: np.ndarray, mu: np.ndarray, var: np.ndarray) -> np.ndarray:
    """log(w_k) + log N(x_n; mu_k, var_k), shape (N, K)."""
    return (np.log(np.maximum(w, 1e-300))[None, :]
            - 0.5 * np.log(2 * np.pi * var)[None, :]
            - 0.5 * (x[:, None] - mu[None, :]) ** 2 / var[None, :])


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def fit_gmm(durations: Sequence[float], K: int = 3, max_iter: int = 500, tol: float = 1e-7,
            seed: int = 0, variance_floor: float = VARIANCE_FLOOR) -> Gmm1D:
    """Fit a K-component 1-D mixture with EM.

    Initialization is deterministic: means at the k-quantiles of the data,
    every variance equal to the pooled sample variance, uniform weights.
    ``seed`` only matters when quantile means coincide, where it drives a
    small jitter that separates them.  Stops when the relative improvement
    of the log-likelihood drops below ``tol`` or after ``max_iter`` steps.
    """
    x = np.asarray(durations, dtype=float).ravel()
    if K < 1:
        raise ValueError("K must be >= 1")
    if x.size < K:
        raise ValueError(f"need at least K={K} samples, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("durations must be finite and positive")
    if K > 1 and np.unique(x).size < K:
        raise DegenerateDataError(f"only {np.unique(x).size} distinct durations for K={K} components")

    n = x.size
    if K == 1:
        var = max(float(x.var()), variance_floor)
        ll = float(_logsumexp(_log_joint(x, np.ones(1), np.array([x.mean()]), np.array([var]))).sum())
        return Gmm1D((1.0,), (float(x.mean()),), (var,), ll, (ll / n,), 0)

    mu = np.quantile(x, (np.arange(K) + 0.5) / K)
    if np.unique(mu).size < K:
        rng = np.random.default_rng(seed)
        spread = max(float(x.std()), 1.0)
        mu = np.sort(mu + rng.normal(0.0, 1e-3 * spread, size=K))
    var = np.full(K, max(float(x.var()), variance_floor))
    w = np.full(K, 1.0 / K)

    log_joint = _log_joint(x, w, mu, var)
    ll = float(_logsumexp(log_joint).sum())
    history = [ll / n]
    n_iter = 0
    while n_iter < max_iter:
        resp = np.exp(log_joint - _logsumexp(log_joint)[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk <= 1e-12):
            raise DegenerateDataError("a mixture component lost all its responsibility")
        w = nk / n
        mu = (resp * x[:, None]).sum(axis=0) / nk
        var = np.maximum((resp * (x[:, None] - mu[None, :]) ** 2).sum(axis=0) / nk, variance_floor)
        n_iter += 1

        log_joint = _log_joint(x, w, mu, var)
        new_ll = float(_logsumexp(log_joint).sum())
        history.append(new_ll / n)
        improvement = new_ll - ll
        ll = new_ll
        if improvement < tol * abs(ll):
            break

    order = np.argsort(mu, kind="stable")
    mu, var, w = mu[order], var[order], w[order]
    if np.any(np.diff(mu) <= 1e-9 * max(1.0, float(np.abs(mu).max()))):
        raise DegenerateDataError("components collapsed onto the same mean")
    w = w / w.sum()
    return Gmm1D(tuple(map(float, w)), tuple(map(float, mu)), tuple(map(float, var)),
                 ll, tuple(history), n_iter)


@dataclass(frozen=True)
class Cutoff:
    """Raw cut-off between two adjacent components (ms)."""

    value: float
    is_fallback: bool = False

    def __float__(self) -> float:
        return float(self.value)


def _crossings(w1, m1, v1, w2, m2, v2) -> list[float]:
    # log(w1 N1) = log(w2 N2) rearranged into a*x^2 + b*x + c = 0
    a = 0.5 / v2 - 0.5 / v1
    b = m1 / v1 - m2 / v2
    c = (0.5 * m2 ** 2 / v2 - 0.5 * m1 ** 2 / v1
         + math.log(w1) - math.log(w2) - 0.5 * math.log(v1) + 0.5 * math.log(v2))
    if abs(a) < 1e-15:
        return [] if abs(b) < 1e-15 else [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    root = math.sqrt(disc)
    return [(-b - root) / (2 * a), (-b + root) / (2 * a)]


def find_cutoffs(gmm: Gmm1D) -> list[Cutoff]:
    """Intersections of weighted densities of each adjacent component pair.

    A crossing must lie strictly between the two means; where none does, the
    midpoint of the means is returned with ``is_fallback`` set.
    """
    if gmm.K < 2:
        raise ValueError("need at least two components to find cut-offs")
    cutoffs = []
    for k in range(gmm.K - 1):
        lo, hi = gmm.means[k], gmm.means[k + 1]
        args = (gmm.weights[k], lo, gmm.variances[k], gmm.weights[k + 1], hi, gmm.variances[k + 1])
        inside = [r for r in _crossings(*args) if lo < r < hi] if gmm.weights[k] > 0 and gmm.weights[k + 1] > 0 else []
        if not inside:
            cutoffs.append(Cutoff((lo + hi) / 2.0, is_fallback=True))
            continue
        if len(inside) > 1:
            # keep the crossing where dominance passes from the lower to the upper component
            eps = 1e-6 * (hi - lo)
            inside = [r for r in inside
                      if gmm.component_pdf(r - eps, k) >= gmm.component_pdf(r - eps, k + 1)
                      and gmm.component_pdf(r + eps, k + 1) >= gmm.component_pdf(r + eps, k)] or inside
        cutoffs.append(Cutoff(float(inside[0])))
    return cutoffs


@dataclass(frozen=True)
class DurationCategorizer:
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS

    def __post_init__(self):
        ts = tuple(int(t) for t in self.thresholds)
        object.__setattr__(self, "thresholds", ts)
        if not ts:
            raise ValueError("need at least one threshold")
        if any(t <= 0 or t % 100 for t in ts):
            raise ValueError(f"thresholds must be positive multiples of 100 ms: {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ThresholdCollisionError(f"thresholds must be strictly ascending: {ts}")

    @property
    def n_categories(self) -> int:
        return len(self.thresholds) + 1

    def categorize(self, duration_ms: float) -> int:
        return categorize(duration_ms, self)


def _round_hundred(x: float) -> int:
    return int(math.floor(x / 100.0 + 0.5)) * 100


def round_thresholds(cutoffs: Sequence[float | Cutoff]) -> DurationCategorizer:
    """Round each cut-off to the nearest 100 ms (exact halves round up)."""
    rounded = tuple(_round_hundred(float(c)) for c in cutoffs)
    if any(b <= a for a, b in zip(rounded, rounded[1:])):
        raise ThresholdCollisionError(f"rounding collapsed thresholds {list(map(float, cutoffs))} -> {rounded}")
    return DurationCategorizer(rounded)


def categorize(duration_ms: float, categorizer: DurationCategorizer = DurationCategorizer()) -> int:
    """Category in 1..K.

    Every threshold but the last belongs to the category above it, the last
    threshold belongs to the category below it, so 300 and 700 are both
    medium under the defaults.  With a single threshold it opens category 2.
    """
    if not duration_ms > 0:
        raise ValueError(f"pause duration must be positive, got {duration_ms}")
    ts = categorizer.thresholds
    if len(ts) == 1:
        return 1 if duration_ms < ts[0] else 2
    cat = 1 + sum(duration_ms >= t for t in ts[:-1])
    return cat + 1 if duration_ms > ts[-1] else cat


def fit_categorizer(durations: Sequence[float], K: int = 3, **fit_kwargs) -> tuple[DurationCategorizer, Gmm1D, list[Cutoff]]:
    """Full pipeline: fit, intersect, round."""
    gmm = fit_gmm(durations, K=K, **fit_kwargs)
    cutoffs = find_cutoffs(gmm)
    return round_thresholds(cutoffs), gmm, cutoffs


def save_categorizer(path: str | Path, categorizer: DurationCategorizer, gmm: Gmm1D | None = None,
                     cutoffs: Sequence[Cutoff] | None = None) -> None:
    record = {"format": "pausekit-categorizer", "version": 1,
              "thresholds": list(categorizer.thresholds)}
    if gmm is not None:
        record.update(K=gmm.K, weights=list(gmm.weights), means=list(gmm.means),
                      variances=list(gmm.variances), log_likelihood=gmm.log_likelihood)
    if cutoffs is not None:
        record["raw_cutoffs"] = [c.value for c in cutoffs]
        record["fallback"] = [c.is_fallback for c in cutoffs]
    Path(path).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")


def load_categorizer(path: str | Path) -> DurationCategorizer:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format") != "pausekit-categorizer" or record.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 categorizer file")
    return DurationCategorizer(tuple(record["thresholds"]))
