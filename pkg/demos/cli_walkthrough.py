"""End-to-end run of the ``reckit`` command line.

Writes a synthetic dataset and a few JSON configs into a scratch directory,
then calls the same entry point the ``reckit`` console script uses. The
reports, ledgers and trajectories land next to a manifest with the seed and
a hash of the config. Pass a directory to keep the outputs.
"""

import csv
import json
import sys
import tempfile
from pathlib import Path

from reckit.cli import main as reckit
from reckit.corpus import write_interactions
from reckit.synthetic import long_tail_ratings


def write_dataset(root: Path):
    log = long_tail_ratings(n_users=60, n_items=120, mean_profile=20, seed=0)
    write_interactions(log, root / "ratings.csv")
    with open(root / "items.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item", "genres"])
        for item, meta in sorted(log.item_meta.items()):
            w.writerow([item, "|".join(sorted(meta.genres))])


def config(root: Path, name: str, doc: dict) -> str:
    path = root / f"{name}.json"
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def show_report(out: Path, metrics=None):
    with open(out / "report.csv") as fh:
        for row in csv.DictReader(fh):
            if row["group"] != "all" and metrics is None:
                continue
            if metrics and row["metric"] not in metrics:
                continue
            print(f"    {row['metric']:16s} {row['group']:8s} {float(row['value']):.4f}")


def main(root: Path):
    write_dataset(root)
    dataset = {"interactions": "ratings.csv", "item_meta": "items.csv", "rating_range": [1, 5]}

    print("$ reckit run   (userknn, grouped by mainstreaminess)")
    cfg = config(root, "userknn", {
        "dataset": dataset, "split": {"train_fraction": 0.8}, "algorithm": "userknn",
        "hyper": {"k": 20, "n": 10}, "metrics": ["mae", "ndcg", "miscalibration"], "groups": "tercile", "seed": 0,
    })
    assert reckit(["run", "--config", cfg, "--out", str(root / "userknn")]) == 0
    show_report(root / "userknn", ["mae", "ndcg", "miscalibration"])

    print("\n$ reckit run   (reuseknn_dp)")
    cfg = config(root, "private", {"dataset": dataset, "algorithm": "reuseknn_dp", "hyper": {"k": 10}, "seed": 0})
    assert reckit(["run", "--config", cfg, "--out", str(root / "private")]) == 0
    show_report(root / "private")

    print("\n$ reckit attribute   (act)")
    cfg = config(root, "act", {"dataset": dataset, "algorithm": "act", "hyper": {"n": 5}, "seed": 0})
    assert reckit(["attribute", "--config", cfg, "--out", str(root / "attr")]) == 0
    with open(root / "attr" / "attributions.csv") as fh:
        rows = list(csv.DictReader(fh))
    print(f"    {len(rows)} rows, first: {dict(rows[0])}")

    print("\n$ reckit simulate --batch 3")
    cfg = config(root, "sim", {"n_agents": 200, "iterations": 5, "help_target": "low", "seed": 0})
    assert reckit(["simulate", "--config", cfg, "--out", str(root / "sim"), "--batch", "3"]) == 0

    manifest = json.loads((root / "userknn" / "manifest.json").read_text())
    print(f"\nmanifest for the first run: command={manifest['command']} seed={manifest['seed']} outputs={manifest['outputs']}")

    print("\n$ reckit run   (a config error exits with code 2)", flush=True)
    bad = config(root, "bad", {"dataset": dataset, "algorithm": "svd", "seed": 0})
    print(f"    exit code {reckit(['run', '--config', bad, '--out', str(root / 'bad')])}")


if __name__ == "__main__":
    if len(sys.argv) > 1:
        target = Path(sys.argv[1])
        target.mkdir(parents=True, exist_ok=True)
        main(target)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            main(Path(tmp))
