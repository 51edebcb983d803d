"""Popularity bias in neighborhood recommenders.

Builds a long-tailed synthetic rating log, then shows how strongly MostPopular
and UserKNN echo item popularity, how much more popular the lists are than the
users' own profiles, and whether niche users get worse rating predictions.
"""

import numpy as np

from reckit.corpus import assign_popularity_groups, chronological_split, item_popularity
from reckit.metrics import gap, popularity_lift, popularity_reco_correlation, recommendation_frequency, system_novelty
from reckit.neighbors import MostPopular, UserKNN
from reckit.synthetic import long_tail_ratings


def main(seed: int = 0):
    log = long_tail_ratings(n_users=200, n_items=500, seed=seed)
    pop = item_popularity(log)
    print(f"{len(log.user_ids)} users, {len(log.item_ids)} items, {len(log)} ratings")

    # head share: how much of the attention the top 20% of items take
    counts = np.sort(list(item_popularity(log, by="events").values()))[::-1]
    print(f"top 20% of items hold {counts[: len(counts) // 5].sum() / counts.sum():.0%} of ratings")

    models = {"mostpop": MostPopular(log), "userknn": UserKNN(log, k=40)}
    profiles = {u: sorted(log.items_of(u)) for u in log.user_ids}
    print("\nalgorithm   r(pop, freq)   GAP(recs)   lift    novelty")
    print(f"{'profiles':10s} {'':14s} {gap(log.user_ids, profiles, pop):9.3f}")
    for name, model in models.items():
        recs = {u: model.recommend(u, 10) for u in log.user_ids}
        r = popularity_reco_correlation(recommendation_frequency(recs.values()), pop)
        lift = popularity_lift(log.user_ids, pop, profiles, recs)
        nov = system_novelty([i for rs in recs.values() for i in rs], pop, len(log.user_ids))
        print(f"{name:10s} {r:14.3f} {gap(log.user_ids, recs, pop):9.3f} {lift:7.2f} {nov:9.3f}")

    # rating error by user group, with groups taken from the training half
    train, test = chronological_split(log, 0.8)
    groups = assign_popularity_groups(train, "tercile")
    knn = UserKNN(train, k=40)
    print("\nUserKNN MAE by mainstreaminess group")
    for label in groups.labels:
        errs = [abs(knn.predict(u, e.item).value - e.value) for u in groups.members(label) for e in test.by_user.get(u, ())]
        print(f"  {label:8s} {np.mean(errs):.3f}  ({len(errs)} test ratings)")


if __name__ == "__main__":
    main()
