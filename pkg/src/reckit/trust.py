"""Katz similarity on trust networks and trust-based KNN for cold-start users.

Katz similarity counts walks of every length between two users, attenuated
by ``alpha`` per hop::

    S = sum_{h=1..K} alpha^h A^h          (truncated)
    S = (I - alpha A)^-1 - I              (K = infinity, alpha * lambda_max < 1)

Users with this similarity occupy similar positions in the trust network even
when they share no direct trust connection.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np

from .corpus import IngestError, InteractionLog
from .neighbors import Neighborhood, Prediction, Fallback, predict_rating, select_top_k


@dataclass(frozen=True)
class TrustGraph:
    """Directed 0/1 trust edges over ``nodes``; self-loops are dropped.

    ``max_hops=None`` selects the closed form. ``alpha=None`` picks
    ``0.5 / lambda_max``. With ``directed=False`` edges are folded to
    undirected before walks are counted.
    """

    nodes: tuple
    adjacency: np.ndarray
    alpha: float | None = None
    max_hops: int | None = 6
    directed: bool = False

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=float)
        if A.shape != (len(self.nodes), len(self.nodes)):
            raise ValueError("adjacency shape does not match nodes")
        A = (A != 0).astype(float)
        np.fill_diagonal(A, 0.0)
        if not self.directed:
            A = np.maximum(A, A.T)
        object.__setattr__(self, "adjacency", A)
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.max_hops is not None and self.max_hops < 1:
            raise ValueError("max_hops must be >= 1")
        if self.alpha is None:
            lam = self.spectral_radius
            object.__setattr__(self, "alpha", 0.5 / lam if lam > 0 else 0.5)
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    @classmethod
    def from_edges(cls, edges: Iterable[tuple], nodes: Sequence | None = None, **kw) -> "TrustGraph":
        edges = [(a, b) for a, b in edges if a != b]
        if nodes is None:
            nodes = sorted({x for e in edges for x in e})
        index = {n: k for k, n in enumerate(nodes)}
        A = np.zeros((len(nodes), len(nodes)))
        for a, b in edges:
            A[index[a], index[b]] = 1.0
        return cls(tuple(nodes), A, **kw)

    @property
    def spectral_radius(self) -> float:
        if self.adjacency.size == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.adjacency))))

    @property
    def index(self) -> dict:
        return {n: k for k, n in enumerate(self.nodes)}


def read_trust_edges(path: str | Path) -> list:
    """Read a ``truster,trustee`` CSV."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"trust edge file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"truster", "trustee"} <= set(reader.fieldnames or ()):
            raise IngestError(f"{path}: need columns 'truster' and 'trustee'")
        return [(r["truster"], r["trustee"]) for r in reader if r["truster"] and r["trustee"]]


@dataclass(frozen=True)
class SimilarityMatrix:
    nodes: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_idx", {n: k for k, n in enumerate(self.nodes)})

    def get(self, u, v) -> float:
        if u not in self._idx or v not in self._idx:
            return 0.0
        return float(self.values[self._idx[u], self._idx[v]])


def katz_similarity(g: TrustGraph) -> SimilarityMatrix:
    """Truncated or closed-form Katz similarity matrix of ``g``."""
    A = g.adjacency
    n = A.shape[0]
    if g.max_hops is None:
        if g.alpha * g.spectral_radius >= 1.0:
            raise ValueError(
                f"alpha={g.alpha:g} must be below 1/lambda_max={1 / g.spectral_radius:g} for the closed form"
            )
        S = np.linalg.inv(np.eye(n) - g.alpha * A) - np.eye(n)
    else:
        step = g.alpha * A
        P = step.copy()
        S = step.copy()
        for _ in range(g.max_hops - 1):
            P = P @ step
            S += P
    if not g.directed:
        S = 0.5 * (S + S.T)
    return SimilarityMatrix(g.nodes, S)


class TrustKNN:
    """KNN rating prediction with Katz similarities as neighbor weights.

    The target user needs no ratings of their own, only trust connections.
    """

    def __init__(self, sims: SimilarityMatrix, log: InteractionLog, k: int = 20, fallback: str = "none"):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.sims = sims
        self.log = log
        self.k = k
        self.fallback = Fallback(log, fallback)
        self._raters: dict = {}
        for u, i in log.latest_ratings:
            self._raters.setdefault(i, []).append(u)

    def neighbors(self, user, item, k: int | None = None) -> Neighborhood:
        k = self.k if k is None else k
        idx = self.sims._idx
        raters = sorted(r for r in self._raters.get(item, ()) if r != user and r in idx)
        if user not in idx or not raters:
            return Neighborhood((user, item))
        row = self.sims.values[idx[user]]
        sims = [row[idx[r]] for r in raters]
        top = select_top_k(np.arange(len(raters)), sims, k)
        return Neighborhood((user, item), tuple((raters[j], s) for j, s in top))

    def predict(self, user, item, k: int | None = None) -> Prediction:
        hood = self.neighbors(user, item, k)
        if not hood.members:
            return self.fallback(hood)
        return Prediction(predict_rating(hood, self.log), hood)


def trust_knn_predict(user, item, k: int, sims: SimilarityMatrix, log: InteractionLog) -> float:
    """Katz-weighted KNN prediction; raises ``EmptyNeighborhood`` without trusted raters."""
    return TrustKNN(sims, log, k, fallback="none").predict(user, item).value
