"""Batch experiment runner.

Subcommands share ``--config <path>`` (JSON), ``--out <dir>``, ``--seed``
and ``--threads``. Relative paths inside a config resolve against the
config file's directory. Every command writes ``manifest.json`` next to its
outputs. Exit codes: 0 success, 1 runtime error, 2 config error.

Experiment config (``run`` / ``attribute``)::

    {
      "dataset": {"interactions": "ratings.csv", "item_meta": "items.csv",
                  "trust_edges": "trust.csv", "rating_range": [1, 5],
                  "columns": {"user": "user", "item": "item", "value": "value", "timestamp": "ts"}},
      "split": {"train_fraction": 0.8},
      "algorithm": "userknn",
      "hyper": {"k": 40, "metric": "cosine", "n": 10},
      "metrics": ["mae", "precision", "ndcg"],
      "groups": "tercile",
      "seed": 0
    }
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .actr import PRESETS, ActrModel, attribute_components, candidate_units, rank_units, write_attributions
from .corpus import (
    ColumnMapping,
    IngestError,
    InteractionLog,
    assign_popularity_groups,
    chronological_split,
    ingest_interactions,
    item_popularity,
    write_interactions,
)
from .fairsim import SimConfig, run_simulation
from .metrics import (
    MetricReport,
    genre_distribution,
    gap,
    group_report,
    kl_miscalibration,
    mae,
    popularity_reco_correlation,
    ranking_metrics,
    recommendation_frequency,
    system_novelty,
)
from .neighbors import EmptyNeighborhood, ItemKNN, MostPopular, SimilarityConfig, UserKNN, recommend_top_n
from .privacy import DpMechanism, ReuseKNN, dp_predict_rating, median_usage, run_query_stream
from .trust import TrustGraph, TrustKNN, katz_similarity, read_trust_edges

logger = logging.getLogger("reckit")

ALGORITHMS = ("userknn", "itemknn", "mostpop", "reuseknn_dp", "bll", "act", "trust_knn")
RATING_METRICS = ("mae",)
RANKING_METRICS = ("precision", "recall", "f1", "mrr", "ndcg", "miscalibration", "novelty", "popularity_lift", "pop_correlation")
PREDICTORS = ("userknn", "itemknn", "reuseknn_dp", "trust_knn")
RANKERS = ("userknn", "itemknn", "mostpop", "bll", "act")
DEFAULT_METRICS = {
    "userknn": ["mae", "precision", "recall", "ndcg"],
    "itemknn": ["mae", "precision", "recall", "ndcg"],
    "mostpop": ["precision", "recall", "ndcg", "pop_correlation"],
    "reuseknn_dp": ["mae"],
    "trust_knn": ["mae"],
    "bll": ["precision", "recall", "mrr", "ndcg"],
    "act": ["precision", "recall", "mrr", "ndcg"],
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 2)."""


# ---------------------------------------------------------------- config


def load_config(path: str | Path) -> tuple[dict, bytes, Path]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc, raw, path.parent


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _seed(doc: dict, override) -> int:
    seed = doc.get("seed") if override is None else override
    if seed is None:
        raise ConfigError("field 'seed' is required (or pass --seed)")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"field 'seed' must be a non-negative integer, got {seed!r}")
    return seed


def _dataset(doc: dict, base: Path) -> tuple[InteractionLog, dict]:
    ds = doc.get("dataset")
    if not isinstance(ds, dict) or "interactions" not in ds:
        raise ConfigError("field 'dataset.interactions' is required")
    cols = ds.get("columns", {})
    try:
        schema = ColumnMapping(**cols)
    except TypeError as exc:
        raise ConfigError(f"field 'dataset.columns': {exc}") from exc
    paths = {"interactions": _resolve(base, ds["interactions"])}
    for key in ("item_meta", "trust_edges"):
        if ds.get(key):
            paths[key] = _resolve(base, ds[key])
    for key, p in paths.items():
        if not p.exists():
            raise ConfigError(f"field 'dataset.{key}': file not found: {p}")
    rr = ds.get("rating_range")
    if rr is not None and (len(rr) != 2 or rr[0] > rr[1]):
        raise ConfigError("field 'dataset.rating_range' must be [min, max]")
    log = ingest_interactions(paths["interactions"], schema, tuple(rr) if rr else None, paths.get("item_meta"))
    return log, paths


def _split(doc: dict, log: InteractionLog):
    frac = doc.get("split", {}).get("train_fraction", 0.8)
    if not isinstance(frac, (int, float)) or not 0 < frac < 1:
        raise ConfigError(f"field 'split.train_fraction' must lie in (0, 1), got {frac!r}")
    return chronological_split(log, float(frac))


def _experiment(doc: dict) -> tuple[str, dict, list, str | None]:
    algo = doc.get("algorithm")
    if algo not in ALGORITHMS:
        raise ConfigError(f"field 'algorithm': unknown algorithm {algo!r}; expected one of {', '.join(ALGORITHMS)}")
    hyper = dict(doc.get("hyper", {}))
    k = hyper.get("k", 40)
    if not isinstance(k, int) or k < 1:
        raise ConfigError(f"field 'hyper.k' must be a positive integer, got {k!r}")
    n = hyper.get("n", 10)
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"field 'hyper.n' must be a positive integer, got {n!r}")
    if hyper.get("metric", "cosine") not in ("cosine", "pearson", "binary"):
        raise ConfigError(f"field 'hyper.metric': unknown similarity {hyper['metric']!r}")
    tau = hyper.get("tau", "median")
    if tau != "median" and not (isinstance(tau, (int, float)) and tau >= 0):
        raise ConfigError(f"field 'hyper.tau' must be 'median' or >= 0, got {tau!r}")
    d = hyper.get("d", 0.5)
    if d != "fit" and not (isinstance(d, (int, float)) and d > 0):
        raise ConfigError(f"field 'hyper.d' must be 'fit' or > 0, got {d!r}")
    weights = hyper.get("weights", algo if algo in PRESETS else "hybrid")
    if isinstance(weights, str):
        if weights not in PRESETS:
            raise ConfigError(f"field 'hyper.weights': unknown preset {weights!r}")
        weights = PRESETS[weights]
    if len(weights) != 4 or any(w < 0 for w in weights) or sum(weights) <= 0:
        raise ConfigError("field 'hyper.weights' needs 4 non-negative weights with positive sum")
    alpha = hyper.get("alpha")
    if alpha is not None and not (isinstance(alpha, (int, float)) and alpha > 0):
        raise ConfigError(f"field 'hyper.alpha' must be > 0, got {alpha!r}")
    hyper.update(k=k, n=n, tau=tau, d=d, weights=tuple(float(w) for w in weights))
    metrics = list(doc.get("metrics", DEFAULT_METRICS[algo]))
    for m in metrics:
        if m not in RATING_METRICS + RANKING_METRICS:
            raise ConfigError(f"field 'metrics': unknown metric {m!r}")
        if m in RATING_METRICS and algo not in PREDICTORS:
            raise ConfigError(f"field 'metrics': {m!r} needs a rating predictor, {algo!r} only ranks")
        if m in RANKING_METRICS and algo not in RANKERS:
            raise ConfigError(f"field 'metrics': {m!r} needs a ranking algorithm, {algo!r} only predicts ratings")
    groups = doc.get("groups")
    if groups not in (None, "tercile", "ms-beyms"):
        raise ConfigError(f"field 'groups': unknown scheme {groups!r}")
    return algo, hyper, metrics, groups


def write_manifest(out: Path, command: str, raw_config: bytes, seed, outputs) -> None:
    doc = {
        "command": command,
        "config_sha256": hashlib.sha256(raw_config).hexdigest(),
        "seed": seed,
        "version": __version__,
        "outputs": sorted(outputs),
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- experiment


def _map(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _predict_all(algo: str, hyper: dict, train: InteractionLog, test: InteractionLog, paths: dict, seed: int, threads: int):
    """Per-user lists of (prediction, truth), plus the reuse ledger if any."""
    cfg = SimilarityConfig(hyper.get("metric", "cosine"))
    queries = [(e.user, e.item, e.value) for u in test.user_ids for e in test.by_user[u]]
    ledger = None
    skipped = 0
    if algo == "reuseknn_dp":
        model = UserKNN(train, hyper["k"], cfg)
        tau = hyper["tau"]
        if tau == "median":
            tau = median_usage(run_query_stream([(u, i) for u, i, _ in queries], model, "plain"))
        reuse = ReuseKNN(model)
        reuse.ledger.tau = tau
        mech = DpMechanism(train.rating_range, int(hyper.get("levels", 5)))
        rng = np.random.default_rng(seed)
        # the ledger is shared state: one thread, query order fixed
        preds = [dp_predict_rating(reuse, u, i, mech, rng).value for u, i, _ in queries]
        ledger = reuse.ledger
    else:
        if algo == "userknn":
            model = UserKNN(train, hyper["k"], cfg)
        elif algo == "itemknn":
            model = ItemKNN(train, hyper["k"], cfg)
        else:
            graph = TrustGraph.from_edges(read_trust_edges(paths["trust_edges"]), alpha=hyper.get("alpha"), max_hops=hyper.get("max_hops", 6))
            model = TrustKNN(katz_similarity(graph), train, hyper["k"], fallback=hyper.get("fallback", "none"))

        def one(q):
            try:
                return model.predict(q[0], q[1]).value
            except EmptyNeighborhood:
                return None

        preds = _map(one, queries, threads)
    per_user: dict = {}
    for (u, _, truth), p in zip(queries, preds):
        if p is None:
            skipped += 1
            continue
        per_user.setdefault(u, []).append((p, truth))
    return per_user, ledger, skipped


def _rank_all(algo: str, hyper: dict, train: InteractionLog, users, threads: int):
    n = hyper["n"]
    if algo in ("bll", "act"):
        model = ActrModel.fit(train, "item", d=hyper["d"], weights=hyper["weights"], social_k=hyper.get("social_k", 20))

        def one(u):
            cand = candidate_units(model, u)
            return rank_units(model, u, cand)[:n] if cand else []

        return _map(one, users, threads), model
    if algo == "userknn":
        model = UserKNN(train, hyper["k"], SimilarityConfig(hyper.get("metric", "cosine")))
        return _map(lambda u: model.recommend(u, n), users, threads), model
    if algo == "itemknn":
        model = ItemKNN(train, hyper["k"], SimilarityConfig(hyper.get("metric", "cosine")))
        return _map(lambda u: recommend_top_n(u, n, model.score, train), users, threads), model
    model = MostPopular(train)
    return _map(lambda u: model.recommend(u, n), users, threads), model


def run_experiment(doc: dict, base: Path, out: Path, seed: int, threads: int = 1) -> list[str]:
    algo, hyper, metrics, scheme = _experiment(doc)
    log, paths = _dataset(doc, base)
    if algo == "trust_knn" and "trust_edges" not in paths:
        raise ConfigError("field 'dataset.trust_edges' is required for trust_knn")
    train, test = _split(doc, log)
    groups = assign_popularity_groups(train, scheme) if scheme else None
    report = MetricReport(metadata={"algorithm": algo, "seed": seed, "hyper": {k: v for k, v in sorted(hyper.items())}})
    outputs = []
    if any(m in RATING_METRICS for m in metrics):
        per_user, ledger, skipped = _predict_all(algo, hyper, train, test, paths, seed, threads)
        values = {u: mae([p for p, _ in pt], [t for _, t in pt]) for u, pt in per_user.items()}
        report.extend(group_report(groups, values, "mae", algo))
        n_q = sum(len(v) for v in per_user.values()) + skipped
        report.add(algo, "all", "coverage", (n_q - skipped) / n_q if n_q else 0.0, n_q)
        if ledger is not None:
            ledger.to_csv(out / "ledger.csv")
            outputs.append("ledger.csv")
            report.add(algo, "all", "vulnerable_fraction", ledger.vulnerable_fraction(), len(ledger.usage))
            report.add(algo, "all", "tau", ledger.tau, len(ledger.usage))
    ranking = [m for m in metrics if m in RANKING_METRICS]
    if ranking or algo == "act":
        users = [u for u in test.user_ids if u in train.user_index]
        rec_lists, model = _rank_all(algo, hyper, train, users, threads)
        recs = dict(zip(users, rec_lists))
        _ranking_report(report, algo, ranking, hyper["n"], train, test, recs, groups)
        if algo == "act":
            write_attributions(out / "attributions.csv", [attribute_components(model, u, r) for u, r in recs.items() if r])
            outputs.append("attributions.csv")
    report.to_csv(out / "report.csv")
    report.to_json(out / "report.json")
    return outputs + ["report.csv", "report.json"]


def _ranking_report(report, algo, metrics, n, train, test, recs, groups) -> None:
    pop = item_popularity(train)
    per_metric: dict = {m: {} for m in metrics}
    for u, r in recs.items():
        rel = test.items_of(u) - train.items_of(u)
        scores = ranking_metrics(r, rel, n)
        if not scores.undefined:
            for m in ("precision", "recall", "f1", "mrr", "ndcg"):
                if m in per_metric:
                    per_metric[m][u] = getattr(scores, m)
        if "novelty" in per_metric and r:
            per_metric["novelty"][u] = system_novelty(r, pop, len(train.user_ids))
        if "miscalibration" in per_metric and r:
            meta = train.item_meta
            prof = [i for i in train.items_of(u) if meta[i].genres]
            rec_g = [i for i in r if meta.get(i) and meta[i].genres]
            if prof and rec_g:
                per_metric["miscalibration"][u] = kl_miscalibration(genre_distribution(prof, meta), genre_distribution(rec_g, meta))
    for m, values in per_metric.items():
        if m in ("popularity_lift", "pop_correlation"):
            continue
        report.extend(group_report(groups, values, m, algo))
    if "popularity_lift" in metrics:
        profiles = {u: sorted(train.items_of(u)) for u in recs}
        labels = [(lab, groups.members(lab)) for lab in groups.labels] if groups else []
        for label, members in labels + [("all", list(recs))]:
            members = [u for u in members if recs.get(u)]
            if members:
                gp, gq = gap(members, profiles, pop), gap(members, recs, pop)
                report.add(algo, label, "popularity_lift", (gq - gp) / gp, len(members))
    if "pop_correlation" in metrics:
        freq = recommendation_frequency(recs.values())
        report.add(algo, "all", "pop_correlation", popularity_reco_correlation(freq, pop), len(recs))


# ---------------------------------------------------------------- commands


def cmd_ingest(args) -> int:
    doc, raw, base = load_config(args.config)
    log, _ = _dataset(doc, base)
    out = _outdir(args.out)
    write_interactions(log, out / "interactions.csv")
    with (out / "rejected.csv").open("w", encoding="utf-8") as fh:
        fh.write("line,reason\n")
        for line, reason in log.rejected:
            fh.write(f"{line},{reason}\n")
    write_manifest(out, "ingest", raw, doc.get("seed"), ["interactions.csv", "rejected.csv"])
    print(f"ingested {len(log)} events ({len(log.rejected)} rejected) -> {out}")
    return 0


def cmd_split(args) -> int:
    doc, raw, base = load_config(args.config)
    log, _ = _dataset(doc, base)
    train, test = _split(doc, log)
    out = _outdir(args.out)
    write_interactions(train, out / "train.csv")
    write_interactions(test, out / "test.csv")
    write_manifest(out, "split", raw, doc.get("seed"), ["train.csv", "test.csv"])
    print(f"train {len(train)} / test {len(test)} events -> {out}")
    return 0


def cmd_run(args) -> int:
    doc, raw, base = load_config(args.config)
    seed = _seed(doc, args.seed)
    out = _outdir(args.out)
    outputs = run_experiment(doc, base, out, seed, args.threads)
    write_manifest(out, "run", raw, seed, outputs)
    print(f"wrote {', '.join(outputs)} -> {out}")
    return 0


def cmd_attribute(args) -> int:
    doc, raw, base = load_config(args.config)
    doc = dict(doc, algorithm="act", metrics=[])
    doc.setdefault("hyper", {}).setdefault("weights", "hybrid")
    seed = _seed(doc, args.seed)
    _, hyper, _, _ = _experiment(doc)
    log, _ = _dataset(doc, base)
    out = _outdir(args.out)
    model = ActrModel.fit(log, "item", d=hyper["d"], weights=hyper["weights"], social_k=hyper.get("social_k", 20))
    users = list(log.user_ids)

    def one(u):
        cand = candidate_units(model, u)
        return attribute_components(model, u, rank_units(model, u, cand)[: hyper["n"]]) if cand else None

    mats = [m for m in _map(one, users, args.threads) if m is not None]
    write_attributions(out / "attributions.csv", mats)
    write_manifest(out, "attribute", raw, seed, ["attributions.csv"])
    print(f"attributed {len(mats)} users -> {out}")
    return 0


def cmd_simulate(args) -> int:
    doc, raw, _ = load_config(args.config)
    doc = dict(doc)
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        cfg = SimConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"simulation config: {exc}") from exc
    if args.batch < 1:
        raise ConfigError("--batch must be >= 1")
    out = _outdir(args.out)
    seeds = list(range(cfg.seed, cfg.seed + args.batch))

    def one(s):
        traj = run_simulation(replace(cfg, seed=s))
        name = f"trajectory_seed{s}.csv" if args.batch > 1 else "trajectory.csv"
        traj.to_csv(out / name)
        return name

    names = _map(one, seeds, args.threads)
    write_manifest(out, "simulate", raw, cfg.seed, names)
    print(f"wrote {len(names)} trajectories -> {out}")
    return 0


def _outdir(p) -> Path:
    out = Path(p)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reckit", description="Seeded recommender experiments and fairness simulations.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "ingest": (cmd_ingest, "validate an interaction file and write a clean copy"),
        "split": (cmd_split, "chronological per-user train/test split"),
        "run": (cmd_run, "train, recommend and evaluate one algorithm"),
        "attribute": (cmd_attribute, "ACT-R component attribution for every user"),
        "simulate": (cmd_simulate, "agent-based fairness simulation"),
    }
    for name, (fn, help_) in specs.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for per-user scoring")
        if name == "simulate":
            p.add_argument("--batch", type=int, default=1, help="run this many consecutive seeds")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IngestError, EmptyNeighborhood, ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
