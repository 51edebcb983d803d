"""Neighborhood-based collaborative filtering.

UserKNN predicts ``r(u, i)`` as the similarity-weighted mean of the ratings
that the ``k`` users most similar to ``u`` gave to ``i``::

    r(u, i) = sum(sim(u, n) * r(n, i)) / sum(sim(u, n)),  n in N_k(u, i)

Only candidates with strictly positive similarity enter a neighborhood, so the
prediction is always a convex combination of neighbor ratings. Ties are broken
by id, which for string ids is lexicographic order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, NamedTuple

import numpy as np
from scipy import sparse

from .corpus import InteractionLog, item_popularity

METRICS = ("cosine", "pearson", "binary")


class EmptyNeighborhood(LookupError):
    """No usable neighbor exists for a query; callers decide on a fallback."""


@dataclass(frozen=True)
class SimilarityConfig:
    """``min_overlap`` defaults to 1 for cosine metrics and 2 for Pearson."""

    metric: str = "cosine"
    min_overlap: int | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown similarity metric {self.metric!r}")
        if self.min_overlap is None:
            object.__setattr__(self, "min_overlap", 2 if self.metric == "pearson" else 1)
        if self.min_overlap < 1:
            raise ValueError("min_overlap must be >= 1")


def similarity(u: Mapping, v: Mapping, cfg: SimilarityConfig = SimilarityConfig()) -> float:
    """Similarity between two sparse profiles (item -> rating).

    Cosine uses the full profiles; Pearson uses co-rated items only. Pairs
    with fewer than ``cfg.min_overlap`` co-rated items, and degenerate
    profiles, have similarity 0.
    """
    common = set(u) & set(v)
    if len(common) < cfg.min_overlap:
        return 0.0
    if cfg.metric == "pearson":
        xs = np.array([u[i] for i in sorted(common)], dtype=float)
        ys = np.array([v[i] for i in sorted(common)], dtype=float)
        dx, dy = xs - xs.mean(), ys - ys.mean()
        den = math.sqrt(float(dx @ dx) * float(dy @ dy))
        if den <= 1e-12:
            return 0.0
        return float(np.clip(dx @ dy / den, -1.0, 1.0))
    if cfg.metric == "binary":
        u = dict.fromkeys(u, 1.0)
        v = dict.fromkeys(v, 1.0)
    dot = math.fsum(u[i] * v[i] for i in common)
    nu = math.sqrt(math.fsum(x * x for x in u.values()))
    nv = math.sqrt(math.fsum(x * x for x in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(min(dot / (nu * nv), 1.0))


def rating_matrix(log: InteractionLog, binary: bool = False) -> sparse.csr_matrix:
    """Users x items CSR matrix of latest values, rows/cols in log id order."""
    rows, cols, vals = [], [], []
    for (u, i), r in log.latest_ratings.items():
        rows.append(log.user_index[u])
        cols.append(log.item_index[i])
        vals.append(1.0 if binary else float(r))
    shape = (len(log.user_ids), len(log.item_ids))
    return sparse.csr_matrix((vals, (rows, cols)), shape=shape, dtype=float)


def similarity_matrix(R: sparse.spmatrix, cfg: SimilarityConfig = SimilarityConfig()) -> np.ndarray:
    """Dense row-row similarity matrix of ``R`` with a zero diagonal."""
    R = sparse.csr_matrix(R, dtype=float)
    if cfg.metric == "binary":
        R = R.copy()
        R.data[:] = 1.0
    B = R.copy()
    B.data[:] = 1.0
    overlap = (B @ B.T).toarray()
    dot = (R @ R.T).toarray()
    if cfg.metric == "pearson":
        RB = (R @ B.T).toarray()  # RB[u, v] = sum of u's ratings over items co-rated with v
        R2B = (R.multiply(R) @ B.T).toarray()
        with np.errstate(divide="ignore", invalid="ignore"):
            cov = dot - RB * RB.T / overlap
            var_u = R2B - RB**2 / overlap
            var_v = var_u.T
            den = np.sqrt(np.clip(var_u, 0, None) * np.clip(var_v, 0, None))
            S = np.where(den > 1e-12, cov / den, 0.0)
        S = np.clip(np.nan_to_num(S), -1.0, 1.0)
    else:
        norms = np.sqrt(np.asarray(R.multiply(R).sum(axis=1)).ravel())
        outer = np.outer(norms, norms)
        with np.errstate(divide="ignore", invalid="ignore"):
            S = np.where(outer > 0, dot / outer, 0.0)
        S = np.minimum(S, 1.0)
    S[overlap < cfg.min_overlap] = 0.0
    np.fill_diagonal(S, 0.0)
    return S


@dataclass(frozen=True)
class Neighborhood:
    """Ranked neighbors for a ``(user, item)`` query, similarity descending."""

    query: tuple
    members: tuple = ()

    def __len__(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> list:
        return [m for m, _ in self.members]

    @property
    def similarities(self) -> list:
        return [s for _, s in self.members]


def select_top_k(ids, sims, k: int, order_keys=None) -> list:
    """Indices of the ``k`` best candidates with similarity > 0, by (sim desc, key)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ids = np.asarray(ids)
    sims = np.asarray(sims, dtype=float)
    keep = sims > 0
    ids, sims = ids[keep], sims[keep]
    keys = ids if order_keys is None else np.asarray(order_keys)[keep]
    order = np.lexsort((keys, -sims))
    return list(zip(ids[order[:k]].tolist(), sims[order[:k]].tolist()))


def predict_rating(hood: Neighborhood, log: InteractionLog | Mapping) -> float:
    """Similarity-weighted mean of the neighbors' latest ratings of the query item."""
    if not hood.members:
        raise EmptyNeighborhood(f"no neighbors for {hood.query}")
    ratings = log.latest_ratings if isinstance(log, InteractionLog) else log
    item = hood.query[1]
    return weighted_mean([ratings[(n, item)] for n in hood.ids], hood.similarities)


def weighted_mean(values, weights) -> float:
    # fsum keeps the result independent of member order
    num = math.fsum(w * r for w, r in zip(weights, values))
    den = math.fsum(weights)
    return num / den


class Prediction(NamedTuple):
    value: float
    neighborhood: Neighborhood
    fallback: str | None = None


class Fallback:
    """Item-mean then global-mean substitute for empty neighborhoods."""

    def __init__(self, log: InteractionLog, mode: str):
        if mode not in ("item_mean", "global_mean", "none"):
            raise ValueError(f"unknown fallback {mode!r}")
        self.mode = mode
        sums: dict = {}
        for (_, i), r in log.latest_ratings.items():
            s = sums.setdefault(i, [0.0, 0])
            s[0] += r
            s[1] += 1
        self.item_mean = {i: s / c for i, (s, c) in sums.items()}
        vals = list(log.latest_ratings.values())
        self.global_mean = float(np.mean(vals)) if vals else float(np.mean(log.rating_range))

    def __call__(self, hood: Neighborhood) -> Prediction:
        if self.mode == "none":
            raise EmptyNeighborhood(f"no neighbors for {hood.query}")
        item = hood.query[1]
        if self.mode == "item_mean" and item in self.item_mean:
            return Prediction(self.item_mean[item], hood, "item_mean")
        return Prediction(self.global_mean, hood, "global_mean")


class UserKNN:
    """User-based KNN over the latest ratings of a training log.

    The full user-user similarity matrix is computed once at construction;
    every query afterwards is read-only.
    """

    def __init__(
        self,
        log: InteractionLog,
        k: int = 40,
        cfg: SimilarityConfig = SimilarityConfig(),
        fallback: str = "item_mean",
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.log = log
        self.k = k
        self.cfg = cfg
        self.R = rating_matrix(log, binary=cfg.metric == "binary")
        self.B = self.R.copy()
        self.B.data[:] = 1.0
        self.Rc = self.R.tocsc()
        self.S = similarity_matrix(self.R, cfg)
        self.fallback = Fallback(log, fallback)

    def sim(self, u, v) -> float:
        ui, vi = self.log.user_index.get(u), self.log.user_index.get(v)
        if ui is None or vi is None:
            return 0.0
        return float(self.S[ui, vi])

    def raters(self, item) -> np.ndarray:
        """Row indices of users who rated ``item``."""
        j = self.log.item_index.get(item)
        if j is None:
            return np.empty(0, dtype=int)
        return self.Rc.indices[self.Rc.indptr[j] : self.Rc.indptr[j + 1]]

    def neighbors(self, user, item, k: int | None = None) -> Neighborhood:
        """The ``k`` most similar users among those who rated ``item``."""
        k = self.k if k is None else k
        ui = self.log.user_index.get(user)
        cand = self.raters(item)
        if ui is None or cand.size == 0:
            return Neighborhood((user, item))
        cand = cand[cand != ui]
        top = select_top_k(cand, self.S[ui, cand], k)
        ids = self.log.user_ids
        return Neighborhood((user, item), tuple((ids[n], s) for n, s in top))

    def predict(self, user, item, k: int | None = None) -> Prediction:
        hood = self.neighbors(user, item, k)
        if not hood.members:
            return self.fallback(hood)
        return Prediction(predict_rating(hood, self.log), hood)

    def score(self, user, item) -> float:
        """Top-N relevance: sum of sim * rating over the neighborhood (0 if empty)."""
        hood = self.neighbors(user, item)
        r = self.log.latest_ratings
        return math.fsum(s * r[(n, item)] for n, s in hood.members)

    def score_items(self, user) -> np.ndarray:
        """Vectorized :meth:`score` for every catalog item, in log item order."""
        ui = self.log.user_index.get(user)
        out = np.zeros(len(self.log.item_ids))
        if ui is None:
            return out
        sims = self.S[ui]
        pos = np.flatnonzero(sims > 0)
        if pos.size == 0:
            return out
        order = pos[np.lexsort((pos, -sims[pos]))]
        sub = self.R[order].toarray()
        rank = np.cumsum(self.B[order].toarray(), axis=0)
        sub[rank > self.k] = 0.0
        return sims[order] @ sub

    def recommend(self, user, n: int) -> list:
        scores = self.score_items(user)
        return top_n_from_scores(self.log, user, scores, n)


class ItemKNN:
    """Item-based KNN: similarities between item rating vectors over co-rating users."""

    def __init__(
        self,
        log: InteractionLog,
        k: int = 40,
        cfg: SimilarityConfig = SimilarityConfig(),
        fallback: str = "item_mean",
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.log = log
        self.k = k
        self.cfg = cfg
        self.R = rating_matrix(log, binary=cfg.metric == "binary")
        self.S = similarity_matrix(self.R.T.tocsr(), cfg)
        self.fallback = Fallback(log, fallback)

    def neighbors(self, user, item, k: int | None = None) -> Neighborhood:
        """The ``k`` items rated by ``user`` that are most similar to ``item``."""
        k = self.k if k is None else k
        ui, ii = self.log.user_index.get(user), self.log.item_index.get(item)
        if ui is None or ii is None:
            return Neighborhood((user, item))
        row = self.R.getrow(ui)
        cand = row.indices[row.indices != ii]
        if cand.size == 0:
            return Neighborhood((user, item))
        top = select_top_k(cand, self.S[ii, cand], k)
        ids = self.log.item_ids
        return Neighborhood((user, item), tuple((ids[j], s) for j, s in top))

    def predict(self, user, item, k: int | None = None) -> Prediction:
        hood = self.neighbors(user, item, k)
        if not hood.members:
            return self.fallback(hood)
        r = self.log.latest_ratings
        value = weighted_mean([r[(user, j)] for j in hood.ids], hood.similarities)
        return Prediction(value, hood)

    def score(self, user, item) -> float:
        hood = self.neighbors(user, item)
        r = self.log.latest_ratings
        return math.fsum(s * r[(user, j)] for j, s in hood.members)


def top_k_neighbors(model: UserKNN, user, item, k: int) -> Neighborhood:
    return model.neighbors(user, item, k)


def item_knn_predict(model: ItemKNN, user, item, k: int | None = None) -> float:
    """ItemKNN prediction; raises :class:`EmptyNeighborhood` for cold cases."""
    hood = model.neighbors(user, item, k)
    if not hood.members:
        raise EmptyNeighborhood(f"no similar rated items for {hood.query}")
    return model.predict(user, item, k).value


def top_n_from_scores(log: InteractionLog, user, scores, n: int) -> list:
    seen = log.items_of(user)
    ids = log.item_ids
    cand = [j for j, i in enumerate(ids) if i not in seen and np.isfinite(scores[j])]
    cand.sort(key=lambda j: (-scores[j], ids[j]))
    return [ids[j] for j in cand[: max(n, 0)]]


def recommend_top_n(user, n: int, scorer: Callable, log: InteractionLog) -> list:
    """The ``n`` highest-scoring items ``user`` has not interacted with.

    ``scorer(user, item)`` may return ``None`` or NaN for unscoreable items,
    which are skipped. Ties are broken by item id.
    """
    if n <= 0:
        return []
    seen = log.items_of(user)
    scored = []
    for i in log.item_ids:
        if i in seen:
            continue
        s = scorer(user, i)
        if s is None or not np.isfinite(s):
            continue
        scored.append((-float(s), i))
    scored.sort()
    return [i for _, i in scored[:n]]


def most_popular(n: int, log: InteractionLog | None = None, popularity: Mapping | None = None) -> list:
    """Catalog items by popularity descending, ties by id."""
    if popularity is None:
        if log is None:
            raise ValueError("need a log or a popularity map")
        popularity = item_popularity(log)
    ranked = sorted(popularity, key=lambda i: (-popularity[i], i))
    return ranked[: max(n, 0)]


class MostPopular:
    """Unpersonalized baseline: most popular unseen items."""

    def __init__(self, log: InteractionLog):
        self.log = log
        self.popularity = item_popularity(log)

    def score(self, user, item) -> float:
        return self.popularity.get(item, 0.0)

    def score_items(self, user) -> np.ndarray:
        return np.array([self.popularity[i] for i in self.log.item_ids])

    def recommend(self, user, n: int) -> list:
        return top_n_from_scores(self.log, user, self.score_items(user), n)
