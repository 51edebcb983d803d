"""Trust-based prediction for users who have not rated anything.

Collaborative filtering needs a rating history to find neighbors. A trust
graph does not: Katz similarity scores every user a newcomer can reach
through short trust paths, and those users' ratings stand in for the
missing profile.
"""

import numpy as np

from reckit.corpus import Event
from reckit.metrics import mae
from reckit.neighbors import UserKNN
from reckit.synthetic import long_tail_ratings
from reckit.trust import TrustGraph, TrustKNN, katz_similarity


def main(seed: int = 0, n_cold: int = 20):
    log = long_tail_ratings(n_users=150, n_items=300, seed=seed)
    rng = np.random.default_rng(seed)
    users = list(log.user_ids)

    # trust leans toward users with similar taste, plus some random links
    knn = UserKNN(log, k=10)
    edges = set()
    for u in users:
        sims = [(knn.sim(u, v), v) for v in users if v != u]
        for _, v in sorted(sims, reverse=True)[:3]:
            edges.add((u, v))
        edges.add((u, users[rng.integers(len(users))]))
    edges = {(a, b) for a, b in edges if a != b}

    # hide the ratings of a few users to make them cold-start
    cold = set(rng.choice(users, size=n_cold, replace=False))
    hidden = [e for e in log.events if e.user in cold]
    warm = log.with_events([e for e in log.events if e.user not in cold])

    graph = TrustGraph.from_edges(sorted(edges), nodes=users)
    sims = katz_similarity(graph)
    print(f"{len(edges)} trust edges, spectral radius {graph.spectral_radius:.2f}")

    trust = TrustKNN(sims, warm, k=20)
    cf = UserKNN(warm, k=20, fallback="global_mean")
    pairs = [(e.user, e.item, e.value) for e in hidden]
    tp = [trust.predict(u, i) for u, i, _ in pairs]
    covered = [(p.value, r) for p, (_, _, r) in zip(tp, pairs) if p.fallback is None]
    print(f"\n{n_cold} cold users, {len(pairs)} hidden ratings")
    print(f"  trust neighbors found for {len(covered) / len(pairs):.0%} of them")
    print(f"  trust MAE on covered ratings     {mae(*zip(*covered)):.3f}")
    cfp = [cf.predict(u, i).value for u, i, _ in pairs]
    print(f"  rating-based CF (global mean)    {mae(cfp, [r for *_, r in pairs]):.3f}")


if __name__ == "__main__":
    main()
