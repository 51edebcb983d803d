"""Differentially-private neighborhood CF with neighborhood reuse.

Neighbors' ratings are protected by a two-coin randomized response: the
real rating is released on heads; on tails a second fair coin chooses
between the real rating and a rating drawn uniformly from the discrete
rating levels. The real rating is therefore used with probability 0.75.

Every time a user serves as a neighbor their usage count grows. Users whose
usage stays at or below the threshold ``tau`` are *secure* and contribute
their real ratings; users above it are *vulnerable* and are perturbed.
Reusing neighbors that already served a target user concentrates usage on
few users and keeps the majority secure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable, NamedTuple

import numpy as np

from .neighbors import EmptyNeighborhood, Neighborhood, Prediction, UserKNN, weighted_mean

HEADS, TAILS_REAL, TAILS_UNIFORM = "heads", "tails_real", "tails_uniform"


@dataclass(frozen=True)
class DpMechanism:
    """Randomized-response parameters.

    ``levels`` is the number ``m`` of equally spaced ratings the uniform draw
    chooses from. ``force_truth`` pins the mechanism to the real rating and
    exists for reduction tests.
    """

    rating_range: tuple[float, float] = (1.0, 5.0)
    levels: int = 5
    seed: int | None = None
    force_truth: bool = False

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("need at least 2 rating levels")
        lo, hi = self.rating_range
        if not lo < hi:
            raise ValueError("rating_range.min must be < rating_range.max")

    @property
    def support(self) -> np.ndarray:
        return np.linspace(self.rating_range[0], self.rating_range[1], self.levels)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


class Response(NamedTuple):
    value: float
    branch: str


def randomized_response(r: float, mech: DpMechanism, rng: np.random.Generator) -> Response:
    """Release ``r`` through the two-coin mechanism; returns the value and its branch."""
    lo, hi = mech.rating_range
    if not lo <= r <= hi:
        raise ValueError(f"rating {r} outside range {mech.rating_range}")
    if mech.force_truth:
        return Response(float(r), HEADS)
    if rng.random() < 0.5:
        return Response(float(r), HEADS)
    if rng.random() < 0.5:
        return Response(float(r), TAILS_REAL)
    return Response(float(mech.support[rng.integers(mech.levels)]), TAILS_UNIFORM)


def randomized_response_many(ratings, mech: DpMechanism, rng: np.random.Generator):
    """Vectorized mechanism over an array; returns ``(values, used_real)``.

    Draws differ from repeated :func:`randomized_response` calls but follow
    the same distribution.
    """
    r = np.asarray(ratings, dtype=float)
    lo, hi = mech.rating_range
    if np.any((r < lo) | (r > hi)):
        raise ValueError(f"ratings outside range {mech.rating_range}")
    if mech.force_truth:
        return r.copy(), np.ones(r.shape, dtype=bool)
    coins = rng.random((2,) + r.shape)
    real = (coins[0] < 0.5) | (coins[1] < 0.5)
    noise = mech.support[rng.integers(mech.levels, size=r.shape)]
    return np.where(real, r, noise), real


def dp_rating_set(hood: Neighborhood, mech: DpMechanism, rng: np.random.Generator, log) -> list:
    """Perturbed neighbor ratings of the query item, aligned with ``hood.members``."""
    if not hood.members:
        raise EmptyNeighborhood(f"no neighbors for {hood.query}")
    item = hood.query[1]
    ratings = log.latest_ratings
    return [randomized_response(ratings[(n, item)], mech, rng).value for n in hood.ids]


@dataclass
class UsageLedger:
    """How often each user served as a neighbor, with the security threshold ``tau``.

    With ``count="targets"`` (the default) a neighbor's usage is the number
    of distinct target users its ratings were disclosed to, so serving the
    same target again adds nothing. ``count="queries"`` counts every
    neighborhood membership. Build with :meth:`for_users` to register the
    whole population, so never-used users are counted as secure.
    """

    tau: float = 0
    usage: dict = field(default_factory=dict)
    count_mode: str = "targets"
    _targets: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.count_mode not in ("targets", "queries"):
            raise ValueError(f"unknown count mode {self.count_mode!r}")

    @classmethod
    def for_users(cls, users: Iterable[Hashable], tau: float = 0, count_mode: str = "targets") -> "UsageLedger":
        return cls(tau, {u: 0 for u in users}, count_mode)

    def record(self, members: Iterable[Hashable], target: Hashable = None) -> None:
        """Register one query's neighborhood on behalf of ``target``."""
        for m in members:
            if self.count_mode == "queries":
                self.usage[m] = self.usage.get(m, 0) + 1
                continue
            if target is None:
                raise ValueError("target-count ledgers need the query's target user")
            seen = self._targets.setdefault(m, set())
            if target not in seen:
                seen.add(target)
                self.usage[m] = self.usage.get(m, 0) + 1

    def count(self, user) -> int:
        return self.usage.get(user, 0)

    def is_secure(self, user) -> bool:
        return self.count(user) <= self.tau

    def classify(self) -> "Partition":
        return classify_users(self)

    def vulnerable_fraction(self) -> float:
        if not self.usage:
            return 0.0
        return len(self.classify().vulnerable) / len(self.usage)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["user", "usage", "secure"])
            for u in sorted(self.usage):
                w.writerow([u, self.usage[u], int(self.is_secure(u))])


class Partition(NamedTuple):
    secure: frozenset
    vulnerable: frozenset


def classify_users(ledger: UsageLedger) -> Partition:
    """Usage <= tau is secure, above tau is vulnerable."""
    secure = frozenset(u for u, c in ledger.usage.items() if c <= ledger.tau)
    return Partition(secure, frozenset(ledger.usage) - secure)


class ReuseKNN:
    """Reuse-first neighborhood selection on top of a :class:`UserKNN` model.

    For each target user the model remembers who already served as a
    neighbor. Candidates who rated the item are ranked by (previously used
    for this target, similarity, id); the first ``k`` are selected and
    recorded in the ledger.
    """

    def __init__(self, model: UserKNN, ledger: UsageLedger | None = None, k: int | None = None):
        self.model = model
        self.k = model.k if k is None else k
        self.ledger = ledger if ledger is not None else UsageLedger.for_users(model.log.user_ids)
        self.used_for: dict = {}

    def neighbors(self, user, item, record: bool = True) -> Neighborhood:
        log = self.model.log
        ui = log.user_index.get(user)
        cand = self.model.raters(item)
        if ui is None or cand.size == 0:
            return Neighborhood((user, item))
        cand = cand[cand != ui]
        sims = self.model.S[ui, cand]
        keep = sims > 0
        cand, sims = cand[keep], sims[keep]
        used = self.used_for.get(user, set())
        reused = np.fromiter((c in used for c in cand), dtype=bool, count=cand.size)
        order = np.lexsort((cand, -sims, ~reused))[: self.k]
        ids = log.user_ids
        hood = Neighborhood((user, item), tuple((ids[c], float(s)) for c, s in zip(cand[order], sims[order])))
        if record:
            self.used_for.setdefault(user, set()).update(cand[order].tolist())
            self.ledger.record(hood.ids, user)
        return hood


def reuse_neighborhood(reuse: ReuseKNN, user, item) -> Neighborhood:
    return reuse.neighbors(user, item)


def plain_neighborhood(model: UserKNN, ledger: UsageLedger, user, item, k: int | None = None) -> Neighborhood:
    """Similarity top-k selection that also records usage in ``ledger``."""
    hood = model.neighbors(user, item, k)
    ledger.record(hood.ids, user)
    return hood


def private_prediction(
    hood: Neighborhood,
    model: UserKNN,
    mech: DpMechanism,
    rng: np.random.Generator,
    protect,
) -> Prediction:
    """Weighted-mean prediction where ratings of members with ``protect(m)`` are perturbed."""
    if not hood.members:
        return model.fallback(hood)
    item = hood.query[1]
    ratings = model.log.latest_ratings
    values = []
    for n in hood.ids:
        r = ratings[(n, item)]
        values.append(randomized_response(r, mech, rng).value if protect(n) else r)
    return Prediction(weighted_mean(values, hood.similarities), hood)


def dp_predict_rating(reuse: ReuseKNN, user, item, mech: DpMechanism, rng: np.random.Generator) -> Prediction:
    """ReuseKNN prediction protecting only vulnerable neighbors.

    The neighborhood is recorded in the ledger first, so a member whose
    count crosses ``tau`` with this query is already treated as vulnerable.
    """
    hood = reuse.neighbors(user, item)
    ledger = reuse.ledger
    return private_prediction(hood, reuse.model, mech, rng, lambda n: not ledger.is_secure(n))


def full_dp_predict_rating(model: UserKNN, user, item, mech: DpMechanism, rng: np.random.Generator) -> Prediction:
    """Plain UserKNN with every neighbor perturbed."""
    hood = model.neighbors(user, item)
    return private_prediction(hood, model, mech, rng, lambda n: True)


def median_usage(ledger: UsageLedger) -> float:
    return float(np.median(list(ledger.usage.values()))) if ledger.usage else 0.0


def run_query_stream(
    queries, model: UserKNN, strategy: str = "plain", k: int | None = None, count_mode: str = "targets"
) -> UsageLedger:
    """Replay ``(user, item)`` queries and return the resulting usage ledger (tau = inf)."""
    ledger = UsageLedger.for_users(model.log.user_ids, tau=math.inf, count_mode=count_mode)
    if strategy == "plain":
        for u, i in queries:
            plain_neighborhood(model, ledger, u, i, k)
    elif strategy == "reuse":
        reuse = ReuseKNN(model, ledger, k)
        for u, i in queries:
            reuse.neighbors(u, i)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return ledger
