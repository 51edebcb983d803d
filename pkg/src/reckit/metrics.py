"""Accuracy, ranking, calibration and popularity-bias metrics.

Miscalibration compares the genre distribution ``p`` of a user profile with
the distribution ``q`` of the user's recommendations through
``KL(p || q~)`` with ``q~ = (1 - beta) q + beta p``, so genres missing from
the recommendations keep the divergence finite.

Popularity lift compares the group average popularity of recommendations
with that of profiles: ``PL = (GAP_q - GAP_p) / GAP_p``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .corpus import UserGroupAssignment


def mae(pred: Sequence[float], truth: Sequence[float]) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("mae needs two non-empty sequences of equal length")
    return float(np.mean(np.abs(pred - truth)))


class RankingScores(NamedTuple):
    precision: float
    recall: float
    f1: float
    mrr: float
    ndcg: float
    undefined: bool = False


def ranking_metrics(recs: Sequence, relevant: Iterable, n: int) -> RankingScores:
    """Binary-relevance precision, recall, F1, reciprocal rank and nDCG at ``n``.

    An empty relevant set yields zeros with ``undefined=True``.
    """
    if n < 1:
        raise ValueError("cutoff n must be >= 1")
    relevant = set(relevant)
    if not relevant:
        return RankingScores(0.0, 0.0, 0.0, 0.0, 0.0, True)
    top = list(recs)[:n]
    hits = [i in relevant for i in top]
    n_hits = sum(hits)
    precision = n_hits / n
    recall = n_hits / len(relevant)
    f1 = 2 * precision * recall / (precision + recall) if n_hits else 0.0
    mrr = next((1.0 / (r + 1) for r, h in enumerate(hits) if h), 0.0)
    dcg = math.fsum(1.0 / math.log2(r + 2) for r, h in enumerate(hits) if h)
    idcg = math.fsum(1.0 / math.log2(r + 2) for r in range(min(len(relevant), n)))
    return RankingScores(precision, recall, f1, mrr, dcg / idcg)


def genre_distribution(items: Iterable, meta: Mapping) -> dict:
    """Genre -> probability mass; an item with g genres adds 1/g to each."""
    mass: dict = {}
    for i in items:
        genres = meta[i].genres if hasattr(meta[i], "genres") else meta[i]
        genres = sorted(genres)
        for g in genres:
            mass[g] = mass.get(g, 0.0) + 1.0 / len(genres)
    total = math.fsum(mass.values())
    if total <= 0:
        raise ValueError("no genre information for the given items")
    return {g: m / total for g, m in sorted(mass.items())}


def kl_miscalibration(p: Mapping, q: Mapping, beta: float = 0.01) -> float:
    """``sum_c p(c) ln(p(c) / q~(c))`` in nats."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    terms = []
    for c, pc in p.items():
        if pc <= 0:
            continue
        qc = (1.0 - beta) * q.get(c, 0.0) + beta * pc
        if qc <= 0:
            return math.inf
        terms.append(pc * math.log(pc / qc))
    return max(math.fsum(terms), 0.0)


def _mean_popularity(items, popularity: Mapping) -> float:
    items = list(items)
    if not items:
        raise ValueError("average popularity of an empty item list")
    return math.fsum(popularity.get(i, 0.0) for i in items) / len(items)


def gap(users: Iterable, source: Mapping, popularity: Mapping) -> float:
    """Group average popularity: mean over users of their items' mean popularity.

    ``source`` maps each user to the items of their profile or of their
    recommendation list.
    """
    users = list(users)
    if not users:
        raise ValueError("group average popularity of an empty group")
    return math.fsum(_mean_popularity(source[u], popularity) for u in users) / len(users)


def popularity_lift(users: Iterable, popularity: Mapping, profiles: Mapping, recs: Mapping) -> float:
    users = list(users)
    gap_p = gap(users, profiles, popularity)
    if gap_p == 0:
        raise ValueError("popularity lift undefined for a zero-popularity profile group")
    return (gap(users, recs, popularity) - gap_p) / gap_p


def recommendation_frequency(rec_lists: Iterable[Sequence]) -> dict:
    freq: dict = {}
    for recs in rec_lists:
        for i in recs:
            freq[i] = freq.get(i, 0) + 1
    return freq


def popularity_reco_correlation(frequency: Mapping, popularity: Mapping) -> float:
    """Pearson correlation, over catalog items, of popularity and times recommended."""
    items = sorted(popularity)
    x = np.array([popularity[i] for i in items], dtype=float)
    y = np.array([frequency.get(i, 0) for i in items], dtype=float)
    if x.std() == 0 or y.std() == 0:
        raise ValueError("correlation undefined for constant popularity or frequency")
    return float(np.corrcoef(x, y)[0, 1])


def distribution_shape(values: Sequence[float], bias_corrected: bool = False) -> tuple[float, float]:
    """Sample skewness and excess kurtosis (moment estimators unless ``bias_corrected``)."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("need at least 3 values")
    if np.var(v) == 0:
        raise ValueError("skewness and kurtosis undefined for zero variance")
    bias = not bias_corrected
    return float(stats.skew(v, bias=bias)), float(stats.kurtosis(v, fisher=True, bias=bias))


def system_novelty(recs: Iterable, popularity: Mapping, n_users: int) -> float:
    """Mean of ``-ln(popularity)`` over recommended items, popularity floored at ``1 / n_users``."""
    recs = list(recs)
    if not recs:
        raise ValueError("novelty of an empty recommendation list")
    floor = 1.0 / n_users
    return math.fsum(-math.log(max(popularity.get(i, 0.0), floor)) for i in recs) / len(recs)


@dataclass
class MetricReport:
    """Rows of ``(algorithm, group, metric, value, count)`` plus run metadata."""

    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, algorithm: str, group: str, metric: str, value: float, count: int) -> None:
        self.rows.append((algorithm, group, metric, float(value), int(count)))

    def value(self, metric: str, group: str = "all", algorithm: str | None = None) -> float:
        for a, g, m, v, _ in self.rows:
            if m == metric and g == group and (algorithm is None or a == algorithm):
                return v
        raise KeyError((algorithm, group, metric))

    def extend(self, other: "MetricReport") -> None:
        self.rows.extend(other.rows)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["algorithm", "group", "metric", "value", "count"])
            for a, g, m, v, c in self.rows:
                w.writerow([a, g, m, repr(v), c])

    def to_json(self, path: str | Path) -> None:
        doc = {
            "metadata": self.metadata,
            "rows": [dict(zip(("algorithm", "group", "metric", "value", "count"), r)) for r in self.rows],
        }
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")


def group_report(
    assignment: UserGroupAssignment | None,
    values: Mapping[Hashable, float],
    metric: str = "mae",
    algorithm: str = "",
    metadata: Mapping | None = None,
) -> MetricReport:
    """Per-group means (with counts) of per-user metric values, plus an ``all`` row.

    Groups without any valued user are omitted with a warning. Users missing
    from the assignment only enter the overall row.
    """
    report = MetricReport(metadata=dict(metadata or {}))
    users = sorted(values)
    if assignment is not None:
        for label in assignment.labels:
            vals = [values[u] for u in users if assignment.groups.get(u) == label]
            if not vals:
                warnings.warn(f"group {label!r} has no users with a {metric} value; omitted", stacklevel=2)
                continue
            report.add(algorithm, label, metric, math.fsum(vals) / len(vals), len(vals))
    if users:
        report.add(algorithm, "all", metric, math.fsum(values[u] for u in users) / len(users), len(users))
    return report
