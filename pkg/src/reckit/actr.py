"""ACT-R declarative-memory scoring of items or genres.

The activation of a memory unit ``i`` for a user is its base-level
activation plus context-driven associative activation::

    A_i = B_i + sum_j W_j * S_ji
    B_i = ln(sum_k t_k ** -d)

where ``t_k`` is the time since the k-th past occurrence of ``i`` (in
``time_unit`` seconds, floored at ``t_floor``) and ``d`` the decay exponent.
Two further components feed the hybrid ranker: a recency-free valuation
``ln(1 + n)`` and a social score from user-based CF over consumption counts.

Hybrid scores min-max normalize each component over the candidate set and
mix them with non-negative weights; attribution rows divide the weighted
normalized components by their sum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .corpus import Event, InteractionLog
from .neighbors import SimilarityConfig, UserKNN

COMPONENTS = ("bll", "s", "v", "sc")
PRESETS = {
    "bll": (1.0, 0.0, 0.0, 0.0),
    "act": (0.5, 0.5, 0.0, 0.0),
    "hybrid": (0.25, 0.25, 0.25, 0.25),
}


def _check_weights(weights) -> tuple:
    w = tuple(float(x) for x in weights)
    if len(w) != 4 or any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
        raise ValueError(f"component weights must be 4 non-negative values summing to 1, got {weights}")
    return w


def unit_events(log: InteractionLog, unit_kind: str = "item") -> dict:
    """(user, unit) -> sorted occurrence timestamps.

    For ``unit_kind="genre"`` an event counts once for every genre of its item.
    """
    hist: dict = {}
    for e in log.events:
        for unit in _units_of(log, e.item, unit_kind):
            hist.setdefault((e.user, unit), []).append(e.ts)
    return {k: np.sort(np.asarray(v, dtype=float)) for k, v in hist.items()}


def _units_of(log: InteractionLog, item, unit_kind: str):
    if unit_kind in ("item", "track"):
        return (item,)
    if unit_kind == "genre":
        return tuple(sorted(log.item_meta[item].genres))
    raise ValueError(f"unknown unit kind {unit_kind!r}")


def co_occurrence_strengths(log: InteractionLog, unit_kind: str = "item") -> dict:
    """(context unit j, target unit i) -> ln(1 + cooc(j, i) / occ(j)).

    Genres co-occur when they label the same consumed item. Items co-occur
    when ``i`` is consumed right after ``j`` by the same user; ``occ(j)``
    then counts occurrences of ``j`` that have a successor.
    """
    occ: dict = {}
    cooc: dict = {}
    if unit_kind == "genre":
        for e in log.events:
            gs = _units_of(log, e.item, "genre")
            for j in gs:
                occ[j] = occ.get(j, 0) + 1
                for i in gs:
                    cooc[(j, i)] = cooc.get((j, i), 0) + 1
    elif unit_kind in ("item", "track"):
        for evs in log.by_user.values():
            for prev, nxt in zip(evs, evs[1:]):
                occ[prev.item] = occ.get(prev.item, 0) + 1
                key = (prev.item, nxt.item)
                cooc[key] = cooc.get(key, 0) + 1
    else:
        raise ValueError(f"unknown unit kind {unit_kind!r}")
    return {(j, i): math.log1p(c / occ[j]) for (j, i), c in cooc.items()}


def default_context(log: InteractionLog, user, unit_kind: str = "item") -> frozenset:
    """Context from the user's most recent event.

    Genre units: genres of the most recently consumed artist (all catalog
    items by that artist), or of the last item when it has no artist.
    Item units: the last item itself.
    """
    evs = log.by_user.get(user)
    if not evs:
        return frozenset()
    last = evs[-1].item
    if unit_kind != "genre":
        return frozenset({last})
    artist = log.item_meta[last].artist
    if artist is None:
        return frozenset(log.item_meta[last].genres)
    return frozenset(g for i, m in log.item_meta.items() if m.artist == artist for g in m.genres)


@dataclass
class ActrModel:
    """Per-user occurrence histories plus the parameters of every component.

    ``social`` maps ``(user, unit)`` to a social score; when it is ``None``
    the social component is zero. Build from a log with :meth:`fit`.
    """

    histories: Mapping = field(default_factory=dict)
    d: float = 0.5
    assoc: Mapping = field(default_factory=dict)
    component_weights: tuple = PRESETS["hybrid"]
    time_unit: float = 3600.0
    t_floor: float = 1.0
    contexts: Mapping = field(default_factory=dict)
    social: object = None
    unit_kind: str = "item"

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("decay exponent d must be > 0")
        if not self.t_floor > 0:
            raise ValueError("t_floor must be > 0")
        if not self.time_unit > 0:
            raise ValueError("time_unit must be > 0")
        self.component_weights = _check_weights(self.component_weights)
        self._units_by_user: dict = {}
        for u, unit in self.histories:
            self._units_by_user.setdefault(u, set()).add(unit)

    @classmethod
    def fit(
        cls,
        log: InteractionLog,
        unit_kind: str = "item",
        d: float | str = 0.5,
        weights=PRESETS["hybrid"],
        time_unit: float = 3600.0,
        t_floor: float = 1.0,
        social_k: int | None = 20,
    ) -> "ActrModel":
        """Learn histories, associations, default contexts and the social scorer.

        ``d="fit"`` estimates the decay exponent from re-consumption gaps.
        ``social_k=None`` disables the social component.
        """
        if d == "fit":
            d = fit_decay_exponent(log, unit_kind, time_unit=time_unit)
        histories = unit_events(log, unit_kind)
        social = SocialScorer(histories, social_k) if social_k else None
        return cls(
            histories=histories,
            d=float(d),
            assoc=co_occurrence_strengths(log, unit_kind),
            component_weights=weights,
            time_unit=time_unit,
            t_floor=t_floor,
            contexts={u: default_context(log, u, unit_kind) for u in log.user_ids},
            social=social,
            unit_kind=unit_kind,
        )

    def units_of(self, user) -> set:
        return set(self._units_by_user.get(user, ()))

    def last_time(self, user) -> float:
        return max((self.histories[(user, unit)][-1] for unit in self._units_by_user.get(user, ())), default=0.0)

    def context_of(self, user) -> frozenset:
        return frozenset(self.contexts.get(user, ()))


class SocialScorer:
    """User-based CF over consumption counts: sum of similarities of the k
    nearest neighbors who consumed the unit."""

    def __init__(self, histories: Mapping, k: int = 20):
        events = [Event(u, unit, float(len(ts)), 0.0) for (u, unit), ts in histories.items()]
        self.knn = UserKNN(InteractionLog(tuple(events)), k=k, cfg=SimilarityConfig("cosine"))

    def __call__(self, user, unit) -> float:
        return math.fsum(self.knn.neighbors(user, unit).similarities)


def bll_score(model: ActrModel, user, unit, now: float | None = None) -> float | None:
    """Base-level activation, or ``None`` when the unit has no past occurrence."""
    ts = model.histories.get((user, unit))
    if ts is None:
        return None
    if now is not None:
        ts = ts[ts <= now]
    if ts.size == 0:
        return None
    ref = model.last_time(user) if now is None else now
    t = np.maximum((ref - ts) / model.time_unit, model.t_floor)
    return math.log(math.fsum(t ** -model.d))


def associative_activation(model: ActrModel, unit, context: Iterable[Hashable]) -> float:
    """Sum over context elements of ``W_j * S_ji`` with ``W_j = 1 / |context|``."""
    context = list(context)
    if not context:
        return 0.0
    w = 1.0 / len(context)
    return math.fsum(w * model.assoc.get((j, unit), 0.0) for j in context)


def activation_score(model: ActrModel, user, unit, context=None, now: float | None = None) -> float | None:
    """``B_i`` plus associative activation; ``context=None`` uses the user's
    default context. ``None`` when the base level is absent."""
    b = bll_score(model, user, unit, now)
    if b is None:
        return None
    if context is None:
        context = model.context_of(user)
    return b + associative_activation(model, unit, context)


def valuation_score(model: ActrModel, user, unit) -> float:
    ts = model.histories.get((user, unit))
    return math.log1p(0 if ts is None else ts.size)


def social_score(model: ActrModel, user, unit) -> float:
    if model.social is None:
        return 0.0
    return float(model.social(user, unit))


def component_scores(model: ActrModel, user, units: Sequence, context=None, now=None) -> np.ndarray:
    """Raw (BLL, S, V, SC) per unit; absent BLL is NaN."""
    if context is None:
        context = model.context_of(user)
    rows = []
    for unit in units:
        b = bll_score(model, user, unit, now)
        rows.append(
            (
                np.nan if b is None else b,
                associative_activation(model, unit, context),
                valuation_score(model, user, unit),
                social_score(model, user, unit),
            )
        )
    return np.array(rows, dtype=float).reshape(len(units), 4)


def normalize_components(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-max scale each column over the candidates.

    Returns the scaled matrix and an evidence mask (BLL present; S, V, SC
    positive). Absent values scale to 0. A constant column carries no
    ranking information and scales to its evidence mask.
    """
    raw = np.asarray(raw, dtype=float)
    evidence = np.zeros(raw.shape, dtype=bool)
    evidence[:, 0] = ~np.isnan(raw[:, 0])
    evidence[:, 1:] = raw[:, 1:] > 0
    out = np.zeros(raw.shape)
    for c in range(raw.shape[1]):
        col = raw[:, c]
        present = ~np.isnan(col)
        if not present.any():
            continue
        lo, hi = col[present].min(), col[present].max()
        if hi > lo:
            out[present, c] = (col[present] - lo) / (hi - lo)
        else:
            out[:, c] = evidence[:, c]
    return out, evidence


def rank_units(model: ActrModel, user, candidates: Iterable, context=None, now=None, weights=None) -> list:
    """Candidates ranked by weighted normalized components.

    Ties go to the unit with more weighted evidence, then to the smaller id,
    so the one-hot BLL preset reproduces the raw-BLL ranking with absent
    units last.
    """
    units = sorted(set(candidates))
    if not units:
        raise ValueError("empty candidate set")
    w = np.asarray(_check_weights(model.component_weights if weights is None else weights))
    norm, evidence = normalize_components(component_scores(model, user, units, context, now))
    combined = norm @ w
    support = evidence @ w
    order = sorted(range(len(units)), key=lambda n: (-combined[n], -support[n], units[n]))
    return [units[n] for n in order]


def candidate_units(model: ActrModel, user, context=None) -> set:
    """User's past units, units associated with the context, and units of
    the user's social neighbors."""
    if context is None:
        context = model.context_of(user)
    cand = model.units_of(user)
    cand |= {i for (j, i), s in model.assoc.items() if j in context and s > 0}
    if model.social is not None:
        knn = model.social.knn
        ui = knn.log.user_index.get(user)
        if ui is not None:
            top = np.argsort(-knn.S[ui], kind="stable")[: knn.k]
            for n in top:
                if knn.S[ui, n] > 0:
                    cand |= model.units_of(knn.log.user_ids[n])
    return cand


@dataclass(frozen=True)
class AttributionMatrix:
    """Relative contribution of (BLL, S, V, SC) to each recommended unit.

    ``flagged[n]`` marks rows with no contribution at all, which are set to
    the uniform row.
    """

    user: Hashable
    units: tuple
    rows: np.ndarray
    flagged: tuple

    def as_dict(self) -> dict:
        return {u: dict(zip(COMPONENTS, row.tolist())) for u, row in zip(self.units, self.rows)}


def attribute_components(model: ActrModel, user, recs: Sequence, context=None, now=None, weights=None) -> AttributionMatrix:
    units = list(recs)
    w = np.asarray(_check_weights(model.component_weights if weights is None else weights))
    norm, _ = normalize_components(component_scores(model, user, units, context, now))
    weighted = norm * w
    sums = weighted.sum(axis=1)
    flagged = sums <= 0
    rows = np.where(flagged[:, None], 0.25, weighted / np.where(flagged, 1.0, sums)[:, None])
    return AttributionMatrix(user, tuple(units), rows, tuple(bool(f) for f in flagged))


def write_attributions(path: str | Path, matrices: Iterable[AttributionMatrix]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "item", *COMPONENTS])
        for m in matrices:
            for unit, row in zip(m.units, m.rows):
                w.writerow([m.user, unit, *(repr(float(x)) for x in row)])


class DecayCurve(NamedTuple):
    centers: np.ndarray
    density: np.ndarray
    slope: float
    intercept: float


def relistening_curve(
    log: InteractionLog, unit_kind: str = "genre", n_bins: int = 20, time_unit: float = 3600.0
) -> DecayCurve:
    """Re-consumption density over time since the previous occurrence.

    Gaps between consecutive occurrences of the same (user, unit) are binned
    on logarithmic edges; counts are divided by bin width and a least-squares
    line is fitted on log10-log10 axes over non-empty bins.
    """
    gaps = []
    for ts in unit_events(log, unit_kind).values():
        g = np.diff(ts) / time_unit
        gaps.append(g[g > 0])
    gaps = np.concatenate(gaps) if gaps else np.empty(0)
    if gaps.size == 0 or gaps.min() == gaps.max():
        raise ValueError("not enough re-consumption gaps to fit a decay exponent; use a fixed d")
    edges = np.geomspace(gaps.min(), gaps.max(), n_bins + 1)
    counts, _ = np.histogram(gaps, bins=edges)
    keep = counts > 0
    if keep.sum() < 3:
        raise ValueError("fewer than 3 non-empty time bins; use a fixed d")
    centers = np.sqrt(edges[:-1] * edges[1:])[keep]
    density = counts[keep] / np.diff(edges)[keep]
    slope, intercept = np.polyfit(np.log10(centers), np.log10(density), 1)
    return DecayCurve(centers, density, float(slope), float(intercept))


def fit_decay_exponent(log: InteractionLog, unit_kind: str = "genre", n_bins: int = 20, time_unit: float = 3600.0) -> float:
    """Decay exponent ``d`` as the negated log-log slope of the re-consumption curve."""
    return -relistening_curve(log, unit_kind, n_bins, time_unit).slope
