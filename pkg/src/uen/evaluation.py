"""Metrics, overlap-bucket reports, Mann-Whitney U, and random search.

Macro-F1 uses the conservative convention that a class absent from both
predictions and labels scores F1 = 0. The significance test handles ties
with midranks and a tie-corrected normal approximation, switching to the
exact rank-sum distribution for small groups.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .corpus import Bucket, bucket_of

logger = logging.getLogger(__name__)


def accuracy(preds: Sequence[int], labels: Sequence[int]) -> float:
    if len(preds) != len(labels):
        raise ValueError("preds and labels differ in length")
    if not preds:
        raise ValueError("empty input")
    return sum(int(p == y) for p, y in zip(preds, labels)) / len(preds)


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def macro_f1(preds: Sequence[int], labels: Sequence[int]) -> float:
    if len(preds) != len(labels):
        raise ValueError("preds and labels differ in length")
    if not preds:
        raise ValueError("empty input")
    scores = []
    for cls in (0, 1):
        tp = sum(1 for p, y in zip(preds, labels) if p == cls and y == cls)
        fp = sum(1 for p, y in zip(preds, labels) if p == cls and y != cls)
        fn = sum(1 for p, y in zip(preds, labels) if p != cls and y == cls)
        if tp == fp == fn == 0:
            logger.info("class %d absent from preds and labels; F1 set to 0", cls)
            scores.append(0.0)
        else:
            scores.append(_f1(tp, fp, fn))
    return float(np.mean(scores))


@dataclass
class BucketMetrics:
    n: int = 0
    n_true: int = 0
    n_fake: int = 0
    accuracy: float = float("nan")
    macro_f1: float = float("nan")


@dataclass
class EvalReport:
    overall: BucketMetrics
    buckets: dict  # Bucket value -> BucketMetrics
    confusion: dict  # "tp"/"fp"/"tn"/"fn" with fake=positive-class 0 counts
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def bm(b: BucketMetrics) -> dict:
            return {
                "n": b.n,
                "n_true": b.n_true,
                "n_fake": b.n_fake,
                "accuracy": b.accuracy,
                "macro_f1": b.macro_f1,
            }

        return {
            "overall": bm(self.overall),
            "buckets": {k: bm(v) for k, v in self.buckets.items()},
            "confusion": self.confusion,
            "metadata": self.metadata,
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bucket", "n", "n_true", "n_fake", "accuracy", "macro_f1"])
            for name, b in [("overall", self.overall)] + sorted(self.buckets.items()):
                writer.writerow([name, b.n, b.n_true, b.n_fake, b.accuracy, b.macro_f1])


def _metrics(preds, labels) -> BucketMetrics:
    return BucketMetrics(
        n=len(preds),
        n_true=sum(1 for y in labels if y == 1),
        n_fake=sum(1 for y in labels if y == 0),
        accuracy=accuracy(preds, labels),
        macro_f1=macro_f1(preds, labels),
    )


def bucketed_report(
    preds: Sequence[int],
    labels: Sequence[int],
    ratios: Sequence[float],
    metadata: dict | None = None,
) -> EvalReport:
    if not (len(preds) == len(labels) == len(ratios)):
        raise ValueError("preds, labels, ratios differ in length")
    groups: dict[Bucket, tuple[list, list]] = {b: ([], []) for b in Bucket}
    for p, y, r in zip(preds, labels, ratios):
        ps, ys = groups[bucket_of(r)]
        ps.append(p)
        ys.append(y)
    buckets = {}
    for b, (ps, ys) in groups.items():
        buckets[b.value] = _metrics(ps, ys) if ps else BucketMetrics()
    tp = sum(1 for p, y in zip(preds, labels) if p == 0 and y == 0)
    fp = sum(1 for p, y in zip(preds, labels) if p == 0 and y == 1)
    fn = sum(1 for p, y in zip(preds, labels) if p == 1 and y == 0)
    tn = sum(1 for p, y in zip(preds, labels) if p == 1 and y == 1)
    return EvalReport(
        overall=_metrics(list(preds), list(labels)),
        buckets=buckets,
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        metadata=metadata or {},
    )


# ---------------------------------------------------------------------------
# Mann-Whitney U


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mid = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    return ranks

EXACT_LIMIT = 400


def _exact_u_counts(n1: int, n2: int) -> np.ndarray:
    """counts[u] = number of arrangements with U statistic u (no ties)."""
    max_u = n1 * n2
    counts = np.zeros(max_u + 1, dtype=np.float64)
    counts[0] = 1.0
    # Recurrence over the generating function prod_{i=1..n1} (1-x^{n2+i})/(1-x^i).
    for i in range(1, n1 + 1):
        new = np.zeros_like(counts)
        # multiply by 1/(1-x^i): prefix sums with stride i
        for u in range(max_u + 1):
            new[u] = counts[u] + (new[u - i] if u >= i else 0.0)
        # multiply by (1-x^{n2+i})
        shift = n2 + i
        for u in range(max_u, -1, -1):
            if u >= shift:
                new[u] -= new[u - shift]
        counts = new
    return counts


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_u(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Two-sided MWU: exact rank-sum distribution for small untied groups,
    tie-corrected normal approximation with continuity correction otherwise."""
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("both groups must be non-empty")
    pooled = list(x) + list(y)
    ranks = _midranks(pooled)
    r1 = sum(ranks[:n1])
    u1 = r1 - n1 * (n1 + 1) / 2.0
    u2 = n1 * n2 - u1

    # tie structure
    from collections import Counter

    tie_counts = Counter(pooled).values()
    has_ties = any(t > 1 for t in tie_counts)
    n = n1 + n2
    tie_term = sum(t**3 - t for t in tie_counts)

    if len(set(pooled)) == 1:
        return u1, 1.0

    if n1 * n2 <= EXACT_LIMIT and not has_ties:
        counts = _exact_u_counts(n1, n2)
        total = counts.sum()
        u_lo = min(u1, u2)
        p = 2.0 * counts[: int(u_lo) + 1].sum() / total
        return u1, min(p, 1.0)

    if has_ties and n1 * n2 <= EXACT_LIMIT and math.comb(n, n1) <= 100_000:
        # exact permutation of the observed (tied) values
        idx = range(n)
        u_obs_dev = abs(u1 - n1 * n2 / 2.0)
        hits = 0
        total = 0
        for combo in combinations(idx, n1):
            rsum = sum(ranks[i] for i in combo)
            u = rsum - n1 * (n1 + 1) / 2.0
            if abs(u - n1 * n2 / 2.0) >= u_obs_dev - 1e-12:
                hits += 1
            total += 1
        return u1, hits / total

    sd = math.sqrt(n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))))
    if sd == 0:
        return u1, 1.0
    mean = n1 * n2 / 2.0
    z = (abs(u1 - mean) - 0.5) / sd
    return u1, min(2.0 * _norm_sf(max(z, 0.0)), 1.0)


# ---------------------------------------------------------------------------
# hyperparameter search


@dataclass(frozen=True)
class SearchSpace:
    lam: tuple[float, float] = (0.0, 1.0)
    k1: tuple[int, int] = (1, 100)
    k2: tuple[int, int] = (1, 200)


@dataclass
class Trial:
    number: int
    params: dict
    loss: float | None
    failed: bool = False


def tune(
    objective: Callable[[dict], float],
    space: SearchSpace,
    budget: int,
    seed: int = 0,
) -> tuple[dict, list[Trial]]:
    """Seeded random search: uniform lambda, log-uniform integer k1/k2."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    trials: list[Trial] = []
    best_params: dict | None = None
    best_loss = np.inf
    for t in range(budget):
        params = {
            "lam": float(rng.uniform(*space.lam)),
            "k1": _log_uniform_int(rng, *space.k1),
            "k2": _log_uniform_int(rng, *space.k2),
        }
        try:
            loss = float(objective(params))
        except Exception as exc:  # noqa: BLE001 - a failed trial must not kill the search
            logger.warning("trial %d failed: %s", t, exc)
            trials.append(Trial(t, params, None, failed=True))
            continue
        trials.append(Trial(t, params, loss))
        if loss < best_loss:
            best_loss = loss
            best_params = params
    if best_params is None:
        raise RuntimeError("all trials failed")
    return best_params, trials


def _log_uniform_int(rng: np.random.Generator, lo: int, hi: int) -> int:
    u = rng.uniform(math.log(lo), math.log(hi))
    return int(min(max(round(math.exp(u)), lo), hi))


def save_trials(trials: list[Trial], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "lam", "k1", "k2", "loss", "failed"])
        for t in trials:
            writer.writerow(
                [t.number, t.params["lam"], t.params["k1"], t.params["k2"],
                 "" if t.loss is None else t.loss, int(t.failed)]
            )
