"""Interaction logs, item popularity, chronological splits and user groups.

An :class:`InteractionLog` is the common input for every scorer in the
package: timestamped ``(user, item, value)`` events plus per-item metadata
(genre labels and an optional artist). Logs are immutable once built.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

LOW_POP, MED_POP, HIGH_POP = "LowPop", "MedPop", "HighPop"
BEYMS, MS = "BeyMS", "MS"


class IngestError(ValueError):
    """Raised when an input file cannot be turned into a valid log."""


class Event(NamedTuple):
    user: Hashable
    item: Hashable
    value: float
    ts: float


class ItemMeta(NamedTuple):
    genres: frozenset = frozenset()
    artist: Hashable | None = None


@dataclass(frozen=True)
class ColumnMapping:
    user: str = "user"
    item: str = "item"
    value: str = "value"
    timestamp: str = "ts"


@dataclass(frozen=True, eq=False)
class InteractionLog:
    """Validated, immutable collection of interaction events.

    ``rating_range`` defaults to the observed value range. Items that only
    appear in events are registered in ``item_meta`` with empty genres.
    ``rejected`` carries ``(line, reason)`` pairs for rows skipped during
    ingestion.
    """

    events: tuple[Event, ...]
    item_meta: Mapping[Hashable, ItemMeta] = field(default_factory=dict)
    rating_range: tuple[float, float] | None = None
    rejected: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        events = tuple(Event(*e) for e in self.events)
        seen = set()
        for e in events:
            if not (e.ts >= 0):
                raise ValueError(f"negative or invalid timestamp in {e}")
            key = (e.user, e.item, e.ts)
            if key in seen:
                raise ValueError(f"duplicate (user, item, ts) triple {key}")
            seen.add(key)
        meta = {k: ItemMeta(frozenset(v[0]), v[1]) for k, v in dict(self.item_meta).items()}
        for e in events:
            meta.setdefault(e.item, ItemMeta())
        rng = self.rating_range
        if rng is None:
            if events:
                values = [e.value for e in events]
                lo, hi = float(min(values)), float(max(values))
            else:
                lo, hi = 0.0, 1.0
            rng = (lo, hi if hi > lo else lo + 1.0)
        rng = (float(rng[0]), float(rng[1]))
        if not rng[0] < rng[1]:
            raise ValueError("rating_range.min must be < rating_range.max")
        for e in events:
            if not rng[0] <= e.value <= rng[1]:
                raise ValueError(f"value {e.value} outside rating range {rng} in {e}")
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "item_meta", meta)
        object.__setattr__(self, "rating_range", rng)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @cached_property
    def user_ids(self) -> tuple:
        """Distinct users in lexicographic order."""
        return tuple(sorted({e.user for e in self.events}))

    @cached_property
    def item_ids(self) -> tuple:
        """All catalog items (events and metadata) in lexicographic order."""
        return tuple(sorted(self.item_meta))

    @cached_property
    def user_index(self) -> dict:
        return {u: n for n, u in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict:
        return {i: n for n, i in enumerate(self.item_ids)}

    @cached_property
    def by_user(self) -> dict:
        """User -> events sorted by (timestamp, item)."""
        out: dict = {}
        for e in self.events:
            out.setdefault(e.user, []).append(e)
        return {u: tuple(sorted(evs, key=lambda e: (e.ts, e.item))) for u, evs in out.items()}

    @cached_property
    def latest_ratings(self) -> dict:
        """(user, item) -> value of the most recent event; the latest rating wins."""
        out: dict = {}
        for u, evs in self.by_user.items():
            for e in evs:
                out[(u, e.item)] = e.value
        return out

    def profile(self, user) -> dict:
        """Item -> latest value for one user."""
        return {e.item: self.latest_ratings[(user, e.item)] for e in self.by_user.get(user, ())}

    def items_of(self, user) -> set:
        return {e.item for e in self.by_user.get(user, ())}

    def with_events(self, events: Iterable[Event]) -> "InteractionLog":
        """A log over ``events`` sharing this log's metadata and rating range."""
        return InteractionLog(tuple(events), self.item_meta, self.rating_range)


def read_item_meta(path: str | Path) -> dict:
    """Read an ``item,genres,artist`` CSV with ``|``-separated genres."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"item metadata file not found: {path}")
    meta = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "item" not in reader.fieldnames:
            raise IngestError(f"{path}: missing required column 'item'")
        for row in reader:
            genres = frozenset(g for g in (row.get("genres") or "").split("|") if g)
            artist = row.get("artist") or None
            meta[row["item"]] = ItemMeta(genres, artist)
    return meta


def ingest_interactions(
    path: str | Path,
    schema: ColumnMapping = ColumnMapping(),
    rating_range: tuple[float, float] | None = None,
    item_meta: str | Path | Mapping | None = None,
) -> InteractionLog:
    """Read a header CSV of interactions into an :class:`InteractionLog`.

    Rows with unparseable or missing fields, and duplicate
    ``(user, item, ts)`` rows, are skipped and listed in ``log.rejected``.
    A value outside the declared ``rating_range`` is an error naming the
    offending line.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"interaction file not found: {path}")
    if item_meta is not None and not isinstance(item_meta, Mapping):
        item_meta = read_item_meta(item_meta)
    events, rejected, seen = [], [], set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (schema.user, schema.item, schema.value, schema.timestamp):
            if col not in header:
                raise IngestError(f"{path}: missing required column {col!r}")
        # line 1 is the header
        for line, row in enumerate(reader, start=2):
            user, item = row.get(schema.user), row.get(schema.item)
            if not user or not item:
                rejected.append((line, "missing user or item"))
                continue
            try:
                value = float(row[schema.value])
                ts = float(row[schema.timestamp])
            except (TypeError, ValueError):
                rejected.append((line, "unparseable value or timestamp"))
                continue
            if not (math.isfinite(value) and math.isfinite(ts)) or ts < 0:
                rejected.append((line, "non-finite value or negative timestamp"))
                continue
            if rating_range is not None and not rating_range[0] <= value <= rating_range[1]:
                raise IngestError(
                    f"{path}: line {line}: value {value:g} outside rating range "
                    f"[{rating_range[0]:g}, {rating_range[1]:g}]"
                )
            if (user, item, ts) in seen:
                rejected.append((line, "duplicate (user, item, ts)"))
                continue
            seen.add((user, item, ts))
            events.append(Event(user, item, value, ts))
    if rejected:
        logger.warning("%s: skipped %d malformed rows", path, len(rejected))
    return InteractionLog(tuple(events), item_meta or {}, rating_range, tuple(rejected))


def write_interactions(log: InteractionLog, path: str | Path, schema: ColumnMapping = ColumnMapping()):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([schema.user, schema.item, schema.value, schema.timestamp])
        for u in log.user_ids:
            for e in log.by_user[u]:
                w.writerow([e.user, e.item, repr(float(e.value)), repr(float(e.ts))])


def item_popularity(log: InteractionLog, by: str = "users") -> dict:
    """Item -> popularity in ``[0, 1]`` for every catalog item.

    ``by="users"`` gives the fraction of distinct users who interacted with the
    item; ``by="events"`` gives the item's event count relative to the most
    consumed item.
    """
    if not log.events:
        raise ValueError("popularity of an empty log is undefined")
    if by == "users":
        counts = _count(pair[1] for pair in {(e.user, e.item) for e in log.events})
        denom = len(log.user_ids)
    elif by == "events":
        counts = _count(e.item for e in log.events)
        denom = max(counts.values())
    else:
        raise ValueError(f"unknown popularity mode {by!r}")
    return {i: counts.get(i, 0) / denom for i in log.item_ids}


def _count(keys) -> dict:
    out: dict = {}
    for k in keys:
        out[k] = out.get(k, 0) + 1
    return out


class SplitPair(NamedTuple):
    train: InteractionLog
    test: InteractionLog


def chronological_split(log: InteractionLog, train_fraction: float = 0.8) -> SplitPair:
    """Per user, the earliest ``ceil(fraction * n)`` events train and the rest test.

    Users with a single event go entirely to train.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    train, test = [], []
    for u in log.user_ids:
        evs = log.by_user[u]
        n = len(evs)
        # round first so 0.7 * 10 does not ceil to 8
        cut = n if n < 2 else math.ceil(round(train_fraction * n, 9))
        train.extend(evs[:cut])
        test.extend(evs[cut:])
    return SplitPair(log.with_events(train), log.with_events(test))


@dataclass(frozen=True)
class UserGroupAssignment:
    groups: dict
    scheme: str
    mainstreaminess: dict = field(default_factory=dict)

    def members(self, label) -> list:
        return [u for u, g in self.groups.items() if g == label]

    @property
    def labels(self) -> tuple:
        order = {
            "tercile": (LOW_POP, MED_POP, HIGH_POP),
            "ms-beyms": (BEYMS, MS),
        }.get(self.scheme)
        if order is None:
            return tuple(sorted(set(self.groups.values())))
        return order


def mainstreaminess(log: InteractionLog, popularity: Mapping | None = None, aggregate: str = "mean") -> dict:
    """User -> mean (or median) popularity of the user's distinct items."""
    if popularity is None:
        popularity = item_popularity(log)
    agg = {"mean": np.mean, "median": np.median}.get(aggregate)
    if agg is None:
        raise ValueError(f"unknown aggregate {aggregate!r}")
    return {u: float(agg([popularity.get(i, 0.0) for i in sorted(log.items_of(u))])) for u in log.user_ids}


def assign_popularity_groups(
    log: InteractionLog,
    scheme: str = "tercile",
    popularity: Mapping | None = None,
    quantile: float = 0.2,
    aggregate: str = "mean",
) -> UserGroupAssignment:
    """Label users by their inclination towards popular items.

    ``tercile`` sorts users by mainstreaminess (ties by user id) and cuts them
    into LowPop/MedPop/HighPop groups whose sizes differ by at most one.
    ``ms-beyms`` labels the bottom ``quantile`` of users BeyMS, the rest MS.
    """
    scores = mainstreaminess(log, popularity, aggregate)
    order = sorted(scores, key=lambda u: (scores[u], u))
    if scheme == "tercile":
        if len(order) < 3:
            raise ValueError("tercile grouping needs at least 3 users")
        groups = {}
        for label, chunk in zip((LOW_POP, MED_POP, HIGH_POP), np.array_split(np.arange(len(order)), 3)):
            for n in chunk:
                groups[order[n]] = label
    elif scheme == "ms-beyms":
        if not 0.0 < quantile < 1.0:
            raise ValueError("quantile must lie in (0, 1)")
        n_beyms = math.floor(quantile * len(order) + 1e-9)
        groups = {u: (BEYMS if n < n_beyms else MS) for n, u in enumerate(order)}
    else:
        raise ValueError(f"unknown grouping scheme {scheme!r}")
    return UserGroupAssignment(groups, scheme, scores)


def events_from_arrays(users: Sequence, items: Sequence, values: Sequence, ts: Sequence) -> tuple[Event, ...]:
    return tuple(Event(u, i, float(v), float(t)) for u, i, v, t in zip(users, items, values, ts))
