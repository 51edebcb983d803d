import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from reckit import __version__
from reckit.cli import main
from reckit.corpus import write_interactions
from reckit.synthetic import long_tail_ratings

# Four users, four events each; the 0.5 split keeps the first two in train.
# Train popularity: A .75, B .5, C = D = E .25. MostPopular at n=2 (ties by id):
#   u1 -> C, D   test {C, X}  1 hit
#   u2 -> B, D   test {B, Y}  1 hit
#   u3 -> C, D   test {Y, Z}  0 hits
#   u4 -> A, B   test {A, Q}  1 hit
# precision = mean(1/2, 1/2, 0, 1/2) = 0.375; recall = mean(1/2, 1/2, 0, 1/2) = 0.375
TINY = {
    "u1": "ABCX",
    "u2": "ACBY",
    "u3": "ABYZ",
    "u4": "DEAQ",
}


def write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


@pytest.fixture
def tiny(tmp_path):
    lines = ["user,item,value,ts"]
    for u, items in TINY.items():
        lines += [f"{u},{i},1,{t}" for t, i in enumerate(items, start=1)]
    (tmp_path / "tiny.csv").write_text("\n".join(lines) + "\n")
    return tmp_path


@pytest.fixture
def synth(tmp_path):
    log = long_tail_ratings(n_users=40, n_items=80, mean_profile=15, seed=1)
    write_interactions(log, tmp_path / "ratings.csv")
    rng = np.random.default_rng(0)
    users = list(log.user_ids)
    with open(tmp_path / "trust.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["truster", "trustee"])
        for _ in range(120):
            a, b = rng.choice(len(users), 2, replace=False)
            w.writerow([users[a], users[b]])
    return tmp_path


def experiment(base, algorithm, **extra):
    doc = {
        "dataset": {"interactions": "ratings.csv", "trust_edges": "trust.csv", "rating_range": [1, 5]},
        "algorithm": algorithm,
        "hyper": {"k": 10, "n": 5},
        "seed": 3,
    }
    doc.update(extra)
    return write_json(base / f"{algorithm}.json", doc)


def report_rows(out):
    with open(out / "report.csv") as fh:
        return list(csv.DictReader(fh))


def value(rows, metric, group="all"):
    return next(float(r["value"]) for r in rows if r["metric"] == metric and r["group"] == group)


class TestRun:
    def test_mostpop_hand_precision(self, tiny):
        cfg = write_json(tiny / "c.json", {
            "dataset": {"interactions": "tiny.csv"},
            "split": {"train_fraction": 0.5},
            "algorithm": "mostpop",
            "hyper": {"n": 2},
            "metrics": ["precision", "recall"],
            "seed": 0,
        })
        assert main(["run", "--config", str(cfg), "--out", str(tiny / "out")]) == 0
        rows = report_rows(tiny / "out")
        assert value(rows, "precision") == pytest.approx(0.375)
        assert value(rows, "recall") == pytest.approx(0.375)
        manifest = json.loads((tiny / "out" / "manifest.json").read_text())
        assert manifest["command"] == "run" and manifest["seed"] == 0 and manifest["version"] == __version__
        assert manifest["outputs"] == ["report.csv", "report.json"]
        assert len(manifest["config_sha256"]) == 64

    @pytest.mark.parametrize("algorithm", ["userknn", "reuseknn_dp", "act"])
    def test_byte_identical_reruns(self, synth, algorithm):
        cfg = experiment(synth, algorithm, groups="tercile")
        for name in ("a", "b"):
            assert main(["run", "--config", str(cfg), "--out", str(synth / name)]) == 0
        for f in json.loads((synth / "a" / "manifest.json").read_text())["outputs"] + ["manifest.json"]:
            assert (synth / "a" / f).read_bytes() == (synth / "b" / f).read_bytes(), f

    def test_threads_do_not_change_results(self, synth):
        cfg = experiment(synth, "userknn")
        assert main(["run", "--config", str(cfg), "--out", str(synth / "t1")]) == 0
        assert main(["run", "--config", str(cfg), "--out", str(synth / "t4"), "--threads", "4"]) == 0
        assert (synth / "t1" / "report.csv").read_bytes() == (synth / "t4" / "report.csv").read_bytes()

    @pytest.mark.parametrize(
        "algorithm,artifact",
        [("itemknn", None), ("mostpop", None), ("bll", None), ("trust_knn", None), ("reuseknn_dp", "ledger.csv"), ("act", "attributions.csv")],
    )
    def test_every_algorithm_runs(self, synth, algorithm, artifact):
        out = synth / algorithm
        assert main(["run", "--config", str(experiment(synth, algorithm)), "--out", str(out)]) == 0
        assert (out / "report.json").exists()
        if artifact:
            assert (out / artifact).exists()
        if algorithm == "reuseknn_dp":
            rows = report_rows(out)
            assert 0.0 <= value(rows, "vulnerable_fraction") <= 1.0

    def test_ranking_metric_suite(self, synth):
        metrics = ["precision", "recall", "f1", "mrr", "ndcg", "novelty", "popularity_lift", "pop_correlation"]
        cfg = experiment(synth, "userknn", metrics=["mae"] + metrics, groups="ms-beyms")
        assert main(["run", "--config", str(cfg), "--out", str(synth / "o")]) == 0
        got = {r["metric"] for r in report_rows(synth / "o")}
        assert set(metrics) | {"mae", "coverage"} <= got

    def test_seed_override_recorded(self, synth):
        cfg = experiment(synth, "mostpop")
        assert main(["run", "--config", str(cfg), "--out", str(synth / "o"), "--seed", "42"]) == 0
        assert json.loads((synth / "o" / "manifest.json").read_text())["seed"] == 42


class TestErrors:
    def test_unknown_algorithm(self, synth, capsys):
        assert main(["run", "--config", str(experiment(synth, "svd")), "--out", str(synth / "o")]) == 2
        assert "algorithm" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "patch,field",
        [
            ({"seed": None}, "seed"),
            ({"hyper": {"k": 0}}, "hyper.k"),
            ({"metrics": ["auc"]}, "metrics"),
            ({"groups": "quartile"}, "groups"),
            ({"hyper": {"tau": -1}}, "hyper.tau"),
            ({"split": {"train_fraction": 1.0}}, "split.train_fraction"),
            ({"dataset": {"interactions": "missing.csv"}}, "dataset.interactions"),
        ],
    )
    def test_config_errors_exit_2(self, synth, capsys, patch, field):
        cfg = experiment(synth, "userknn", **patch)
        assert main(["run", "--config", str(cfg), "--out", str(synth / "o")]) == 2
        assert field in capsys.readouterr().err

    def test_rating_metric_for_ranker(self, synth, capsys):
        assert main(["run", "--config", str(experiment(synth, "mostpop", metrics=["mae"])), "--out", str(synth / "o")]) == 2
        assert "rating predictor" in capsys.readouterr().err

    def test_bad_rating_is_runtime_error(self, tmp_path, capsys):
        (tmp_path / "ratings.csv").write_text("user,item,value,ts\nu,a,3,1\nu,b,9,2\n")
        cfg = write_json(tmp_path / "c.json", {"dataset": {"interactions": "ratings.csv", "rating_range": [1, 5]}, "algorithm": "userknn", "seed": 0})
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "line 3" in capsys.readouterr().err

    def test_missing_or_broken_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
        (tmp_path / "bad.json").write_text("{not json")
        assert main(["run", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == 2
        assert main(["run", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path), "--threads", "0"]) == 2


class TestOtherCommands:
    def test_ingest_and_split(self, tiny):
        (tiny / "tiny.csv").write_text((tiny / "tiny.csv").read_text() + "u9,,1,5\n")
        cfg = write_json(tiny / "c.json", {"dataset": {"interactions": "tiny.csv"}, "split": {"train_fraction": 0.5}})
        assert main(["ingest", "--config", str(cfg), "--out", str(tiny / "i")]) == 0
        assert len((tiny / "i" / "interactions.csv").read_text().splitlines()) == 17
        assert (tiny / "i" / "rejected.csv").read_text().splitlines()[1].startswith("18,")
        assert main(["split", "--config", str(cfg), "--out", str(tiny / "s")]) == 0
        assert len((tiny / "s" / "train.csv").read_text().splitlines()) == 9
        assert len((tiny / "s" / "test.csv").read_text().splitlines()) == 9

    def test_attribute(self, synth):
        cfg = experiment(synth, "act")
        assert main(["attribute", "--config", str(cfg), "--out", str(synth / "a")]) == 0
        with open(synth / "a" / "attributions.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        for r in rows:
            assert sum(float(r[c]) for c in ("bll", "s", "v", "sc")) == pytest.approx(1.0, abs=1e-9)

    def test_simulate_single_and_batch(self, tmp_path):
        cfg = write_json(tmp_path / "sim.json", {"n_agents": 60, "iterations": 2, "seed": 5})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "one")]) == 0
        assert (tmp_path / "one" / "trajectory.csv").exists()
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "many"), "--batch", "20", "--threads", "4"]) == 0
        files = sorted(p.name for p in (tmp_path / "many").glob("trajectory_seed*.csv"))
        assert len(files) == 20
        assert files == sorted(f"trajectory_seed{s}.csv" for s in range(5, 25))
        assert sorted(json.loads((tmp_path / "many" / "manifest.json").read_text())["outputs"]) == files

    def test_simulate_rejects_bad_config(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "sim.json", {"n_agents": 60, "colour": "red"})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "colour" in capsys.readouterr().err
        cfg = write_json(tmp_path / "sim2.json", {"iterations": 0})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_module_entry_point(self, tmp_path):
        cfg = write_json(tmp_path / "sim.json", {"n_agents": 40, "iterations": 1, "seed": 0})
        res = subprocess.run([sys.executable, "-m", "reckit.cli", "simulate", "--config", str(cfg), "--out", str(tmp_path / "o")], capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        assert "1 trajectories" in res.stdout
