"""Brute-force reference implementations used to check the library.

Everything here is written with plain loops over Python containers and
shares no code with ``reckit``, so agreement is meaningful evidence.
"""

import itertools
import math


def cosine(u: dict, v: dict) -> float:
    dot = sum(u[i] * v[i] for i in u if i in v)
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    return dot / (nu * nv) if nu and nv else 0.0


def pearson(u: dict, v: dict, min_overlap: int = 2) -> float:
    common = [i for i in u if i in v]
    if len(common) < min_overlap:
        return 0.0
    mu = sum(u[i] for i in common) / len(common)
    mv = sum(v[i] for i in common) / len(common)
    num = sum((u[i] - mu) * (v[i] - mv) for i in common)
    den = math.sqrt(sum((u[i] - mu) ** 2 for i in common) * sum((v[i] - mv) ** 2 for i in common))
    return num / den if den > 1e-12 else 0.0


def neighbors(profiles: dict, user, item, k: int, sim=cosine) -> list:
    """Exhaustive top-k: score every other rater of ``item``, sort, cut."""
    scored = []
    for other, prof in profiles.items():
        if other == user or item not in prof:
            continue
        s = sim(profiles.get(user, {}), prof)
        if s > 0:
            scored.append((-s, other))
    scored.sort()
    return [(o, -s) for s, o in scored[:k]]


def weighted_mean_prediction(hood: list, ratings: dict, item) -> float:
    return sum(s * ratings[n][item] for n, s in hood) / sum(s for _, s in hood)


def bll(timestamps, now, d, time_unit=3600.0, t_floor=1.0) -> float:
    total = 0.0
    for ts in timestamps:
        t = max((now - ts) / time_unit, t_floor)
        total += t ** (-d)
    return math.log(total)


def genre_assoc(events, item_genres: dict, j, i) -> float:
    """ln(1 + cooc/occ) counting genre pairs on the same consumed item."""
    occ = sum(1 for _, item in events if j in item_genres[item])
    cooc = sum(1 for _, item in events if j in item_genres[item] and i in item_genres[item])
    return math.log(1 + cooc / occ) if occ else 0.0


def activation(timestamps, now, d, context, events, item_genres, unit, time_unit=3600.0) -> float:
    base = bll(timestamps, now, d, time_unit)
    if not context:
        return base
    return base + sum(genre_assoc(events, item_genres, j, unit) for j in context) / len(context)


def kl(p: dict, q: dict, beta: float) -> float:
    out = 0.0
    for c in p:
        if p[c] > 0:
            qs = (1 - beta) * q.get(c, 0.0) + beta * p[c]
            out += p[c] * math.log(p[c] / qs)
    return out


def popularity_lift(users, profiles, recs, pop) -> float:
    def group_avg(src):
        return sum(sum(pop[i] for i in src[u]) / len(src[u]) for u in users) / len(users)

    gp = group_avg(profiles)
    return (group_avg(recs) - gp) / gp


def katz_walks(n: int, edges: set, alpha: float, hops: int) -> list:
    """Sum over walks of length 1..hops of alpha^length, by explicit enumeration."""
    adj = {a: [b for b in range(n) if (a, b) in edges] for a in range(n)}
    S = [[0.0] * n for _ in range(n)]
    for start in range(n):
        frontier = {start: 1}
        for h in range(1, hops + 1):
            nxt: dict = {}
            for node, count in frontier.items():
                for b in adj[node]:
                    nxt[b] = nxt.get(b, 0) + count
            for end, count in nxt.items():
                S[start][end] += count * alpha**h
            frontier = nxt
    return S


def walk_count(n: int, edges: set, a: int, b: int, length: int) -> int:
    """Number of walks a -> b of exactly ``length`` steps, by enumerating node sequences."""
    total = 0
    for mid in itertools.product(range(n), repeat=length - 1):
        seq = (a, *mid, b)
        if all((seq[s], seq[s + 1]) in edges for s in range(length)):
            total += 1
    return total
