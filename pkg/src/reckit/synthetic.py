"""Seeded synthetic logs used by the tests and demo scripts.

``long_tail_ratings`` draws a rating log whose item popularity follows a
Zipf-like law and whose users differ in their inclination towards popular
items. ``relistening_log`` draws re-consumption histories whose gaps follow
a truncated power law, so the decay exponent is known by construction.
"""

from __future__ import annotations

import numpy as np

from .corpus import Event, InteractionLog, ItemMeta

GENRES = ("rock", "pop", "jazz", "metal", "folk", "electronic")


def long_tail_ratings(
    n_users: int = 200,
    n_items: int = 500,
    mean_profile: float = 60.0,
    zipf_exponent: float = 3.0,
    n_genres: int = len(GENRES),
    noise_sd: float = 0.6,
    inclination: tuple = (1.0, 1.0),
    niche_taste: float = 0.0,
    n_factors: int = 4,
    seed: int = 0,
) -> InteractionLog:
    """Explicit 1-5 ratings with long-tail popularity and genre-clustered tastes.

    Items get a Zipf weight; each user samples items with probability
    proportional to ``weight ** m_u`` boosted for the user's favourite
    genre, where ``m_u`` in ``[0, 1]`` is the user's inclination towards
    popular items. Ratings combine item quality, the user's genre affinity
    and noise.
    """
    rng = np.random.default_rng(seed)
    genres = GENRES[:n_genres] if n_genres <= len(GENRES) else tuple(f"g{g}" for g in range(n_genres))
    item_ids = [f"i{j:04d}" for j in range(n_items)]
    user_ids = [f"u{u:04d}" for u in range(n_users)]

    rank = rng.permutation(n_items) + 1
    weight = rank.astype(float) ** -zipf_exponent
    pop_z = (np.log(weight) - np.log(weight).mean()) / np.log(weight).std()
    quality = 3.3 + 0.35 * pop_z + rng.normal(0, 0.35, n_items)
    item_genre = rng.integers(n_genres, size=n_items)
    artists = rng.integers(max(n_items // 5, 1), size=n_items)

    fav = rng.integers(n_genres, size=n_users)
    incl = rng.beta(*inclination, size=n_users)
    taste = rng.normal(0, 0.5, size=(n_users, n_genres))
    taste[np.arange(n_users), fav] += 1.0
    bias = rng.normal(0, 0.3, size=n_users)
    item_f = rng.normal(0, 1, size=(n_items, n_factors)) / np.sqrt(n_factors)
    user_f = rng.normal(0, 1, size=(n_users, n_factors)) * (niche_taste * (1.0 - incl))[:, None]
    sizes = np.clip(rng.lognormal(np.log(mean_profile), 0.5, size=n_users).astype(int), 10, n_items // 2)

    events = []
    for u in range(n_users):
        logits = incl[u] * np.log(weight) + 1.2 * (item_genre == fav[u])
        p = np.exp(logits - logits.max())
        p /= p.sum()
        chosen = rng.choice(n_items, size=sizes[u], replace=False, p=p)
        raw = (
            quality[chosen]
            + taste[u, item_genre[chosen]]
            + item_f[chosen] @ user_f[u]
            - 0.5
            + bias[u]
            + rng.normal(0, noise_sd, chosen.size)
        )
        ratings = np.clip(np.rint(raw), 1, 5)
        ts = np.sort(rng.uniform(0, 3.0e7, size=chosen.size)).round()
        for j, r, t in zip(chosen, ratings, ts):
            events.append(Event(user_ids[u], item_ids[j], float(r), float(t)))
    meta = {
        item_ids[j]: ItemMeta(frozenset({genres[item_genre[j]]}), f"a{artists[j]:03d}") for j in range(n_items)
    }
    return InteractionLog(tuple(events), meta, (1.0, 5.0))


def powerlaw_gaps(n: int, exponent: float, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """Samples with density proportional to ``t ** -exponent`` on ``[lo, hi]``."""
    u = rng.random(n)
    if abs(exponent - 1.0) < 1e-12:
        return lo * (hi / lo) ** u
    a = 1.0 - exponent
    return (lo**a + u * (hi**a - lo**a)) ** (1.0 / a)


def relistening_log(
    n_events: int = 10_000,
    exponent: float = 1.48,
    n_users: int = 20,
    units_per_user: int = 5,
    min_gap_hours: float = 1.0,
    max_gap_hours: float = 1.0e4,
    flat: bool = False,
    unit_kind: str = "genre",
    seed: int = 0,
) -> InteractionLog:
    """Re-consumption histories with power-law distributed gaps (in hours).

    With ``unit_kind="genre"`` every unit is an item carrying one genre of
    the same name, so genre- and item-level histories coincide. ``flat``
    draws gaps uniformly instead, which yields a zero slope.
    """
    rng = np.random.default_rng(seed)
    n_chains = n_users * units_per_user
    per_chain = np.full(n_chains, n_events // n_chains)
    per_chain[: n_events - per_chain.sum()] += 1
    events, meta = [], {}
    for c in range(n_chains):
        user, unit = f"u{c // units_per_user:03d}", f"t{c:04d}"
        meta[unit] = ItemMeta(frozenset({f"g{c:04d}"}) if unit_kind == "genre" else frozenset())
        m = per_chain[c] - 1
        if flat:
            gaps = rng.uniform(min_gap_hours, max_gap_hours, m)
        else:
            gaps = powerlaw_gaps(m, exponent, min_gap_hours, max_gap_hours, rng)
        start = rng.uniform(0, 1000.0)
        times = start + np.concatenate([[0.0], np.cumsum(gaps)])
        for t in times:
            events.append(Event(user, unit, 1.0, float(t * 3600.0)))
    return InteractionLog(tuple(events), meta)
