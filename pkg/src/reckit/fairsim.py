"""Agent-based simulation of classifier-driven targeted help for jobseekers.

A public employment service classifies jobseekers into low and high
prospects with a logistic regression refitted every iteration. Help raises
the skills of helped agents; unhelped agents' skills decay. Two classifier
variants are compared: *biased* sees the protected attribute next to the
skills, *unbiased* sees the skills only.

Group conventions: ``A = 0`` is the protected (unprivileged) group and
``A = 1`` the privileged group. ``group_means`` is indexed by ``A``.

``help_target`` picks who receives help: ``"high"`` (predicted high
prospects, the default) or ``"low"`` (predicted low prospects, as in
employment services that target help at jobseekers with poor prospects).
Only the latter lets the biased classifier narrow the between-group gap
in the true labels, at the cost of more protected-group false negatives.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import stats

VARIANTS = ("biased", "unbiased")


@dataclass(frozen=True)
class SimConfig:
    n_agents: int = 500
    skill_dim: int = 3
    group_means: tuple = (0.45, 0.55)
    noise_sd: float = 0.15
    protected_share: float = 0.5
    iterations: int = 10
    help_boost: float = 0.01
    decay: float = 0.005
    help_target: str = "high"
    classifier_variant: str = "biased"
    hire_threshold: float = 0.5
    learning_rate: float = 0.1
    max_epochs: int = 5000
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.help_boost < 0 or self.decay < 0:
            raise ValueError("help_boost and decay must be >= 0")
        if self.n_agents < 2 or self.skill_dim < 1:
            raise ValueError("need at least 2 agents and 1 skill dimension")
        if len(self.group_means) != 2:
            raise ValueError("group_means needs one mean per protected-attribute value")
        if not 0.0 < self.protected_share < 1.0:
            raise ValueError("protected_share must lie in (0, 1)")
        if self.classifier_variant not in VARIANTS:
            raise ValueError(f"classifier_variant must be one of {VARIANTS}")
        if self.help_target not in ("high", "low"):
            raise ValueError("help_target must be 'high' or 'low'")
        object.__setattr__(self, "group_means", tuple(float(m) for m in self.group_means))

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown simulation config fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, path: str | Path) -> "SimConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["group_means"] = list(self.group_means)
        return d


@dataclass
class AgentPool:
    """Column-wise agent state; row ``n`` is agent ``n``."""

    skills: np.ndarray
    protected: np.ndarray
    true_label: np.ndarray
    predicted: np.ndarray
    employed: np.ndarray

    def __len__(self) -> int:
        return self.skills.shape[0]

    def copy(self) -> "AgentPool":
        return AgentPool(*(a.copy() for a in (self.skills, self.protected, self.true_label, self.predicted, self.employed)))


def _labels(skills: np.ndarray, threshold: float) -> np.ndarray:
    return (skills.mean(axis=1) >= threshold).astype(int)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def init_population(cfg: SimConfig, rng: np.random.Generator) -> AgentPool:
    """Skills ~ Normal(group mean, noise_sd) per dimension, clipped to [0, 1]."""
    n0 = int(round(cfg.protected_share * cfg.n_agents))
    protected = np.concatenate([np.zeros(n0, dtype=int), np.ones(cfg.n_agents - n0, dtype=int)])
    means = np.asarray(cfg.group_means)[protected]
    skills = np.clip(rng.normal(means[:, None], cfg.noise_sd, size=(cfg.n_agents, cfg.skill_dim)), 0.0, 1.0)
    y = _labels(skills, cfg.hire_threshold)
    return AgentPool(skills, protected, y, np.zeros_like(y), y.copy())


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    bias: float
    epochs: int = 0

    def proba(self, X) -> np.ndarray:
        return sigmoid(np.asarray(X, dtype=float) @ self.weights + self.bias)


def fit_logistic(
    X,
    y,
    learning_rate: float = 0.1,
    max_epochs: int = 5000,
    tol: float = 1e-6,
    init: LogisticModel | None = None,
) -> LogisticModel:
    """Full-batch gradient descent on the mean log-loss.

    Stops when the gradient norm drops below ``tol`` or after ``max_epochs``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.unique(y).size < 2:
        raise ValueError("logistic regression needs both classes in the labels")
    n, p = X.shape
    X1 = np.column_stack([X, np.ones(n)])
    X1t = X1.T / n
    theta = np.zeros(p + 1)
    if init is not None:
        theta[:p] = init.weights
        theta[p] = init.bias
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        z = X1 @ theta
        grad = X1t @ (0.5 * np.tanh(0.5 * z) + 0.5 - y)
        if np.sqrt(grad @ grad) < tol:
            break
        theta -= learning_rate * grad
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("logistic fit diverged")
    w, b = theta[:p].copy(), float(theta[p])
    return LogisticModel(w, b, epoch)


def features(pool: AgentPool, variant: str) -> np.ndarray:
    if variant == "biased":
        return np.column_stack([pool.skills, pool.protected])
    if variant == "unbiased":
        return pool.skills
    raise ValueError(f"unknown classifier variant {variant!r}")


def classify(model: LogisticModel, pool: AgentPool, variant: str) -> np.ndarray:
    """High prospect (1) iff the predicted probability is at least 0.5."""
    return (model.proba(features(pool, variant)) >= 0.5).astype(int)


def step(pool: AgentPool, predictions, cfg: SimConfig, rng: np.random.Generator) -> AgentPool:
    """Apply one round of help and decay, then recompute labels and employment.

    With ``help_target="high"`` predicted high prospects are helped; with
    ``"low"`` predicted low prospects are. Employment requires a positive
    label and succeeds with probability ``sigmoid(mean skill)``.
    """
    pred = np.asarray(predictions, dtype=int)
    helped = pred == 1 if cfg.help_target == "high" else pred == 0
    delta = np.where(helped, cfg.help_boost, -cfg.decay)
    skills = np.clip(pool.skills + delta[:, None], 0.0, 1.0)
    y = _labels(skills, cfg.hire_threshold)
    employed = ((y == 1) & (rng.random(len(y)) < sigmoid(skills.mean(axis=1)))).astype(int)
    return AgentPool(skills, pool.protected.copy(), y, pred.copy(), employed)


class Parity(NamedTuple):
    rate_0: float
    rate_1: float
    difference: float
    ratio: float


def statistical_parity(predictions, attrs) -> Parity:
    """Positive-prediction rates of the protected (A=0) and privileged (A=1) groups.

    ``ratio`` is protected over privileged; it is 1 when both rates are 0.
    """
    pred = np.asarray(predictions, dtype=int)
    a = np.asarray(attrs, dtype=int)
    n0, n1 = int(np.sum(a == 0)), int(np.sum(a == 1))
    if n0 == 0 or n1 == 0:
        raise ValueError("both groups need at least one member")
    pos0, pos1 = int(pred[a == 0].sum()), int(pred[a == 1].sum())
    r0, r1 = pos0 / n0, pos1 / n1
    if pos1 == 0:
        ratio = 1.0 if pos0 == 0 else float("inf")
    else:
        ratio = (pos0 * n1) / (n0 * pos1)
    return Parity(r0, r1, abs(r0 - r1), ratio)


def four_fifths_check(ratio: float, bound: float = 0.8) -> bool:
    return ratio >= bound


class Opportunity(NamedTuple):
    tpr_0: float
    tpr_1: float
    difference: float
    undefined: tuple = ()


def equality_of_opportunity(predictions, truths, attrs) -> Opportunity:
    """True-positive rate per group; groups without qualified members are
    listed in ``undefined`` and get NaN."""
    pred = np.asarray(predictions, dtype=int)
    y = np.asarray(truths, dtype=int)
    a = np.asarray(attrs, dtype=int)
    tprs, undefined = [], []
    for g in (0, 1):
        qualified = (a == g) & (y == 1)
        if not qualified.any():
            undefined.append(g)
            tprs.append(float("nan"))
        else:
            tprs.append(float(pred[qualified].mean()))
    return Opportunity(tprs[0], tprs[1], abs(tprs[0] - tprs[1]), tuple(undefined))


@dataclass
class Trajectory:
    """Per-iteration metric records, keyed ``(metric, group) -> list of values``."""

    config: SimConfig
    series: dict = field(default_factory=dict)

    def record(self, metric: str, group: str, value: float) -> None:
        self.series.setdefault((metric, group), []).append(float(value))

    def __len__(self) -> int:
        return max((len(v) for v in self.series.values()), default=0)

    def get(self, metric: str, group: str = "all") -> np.ndarray:
        return np.asarray(self.series[(metric, group)])

    def final(self, metric: str, group: str = "all") -> float:
        return float(self.series[(metric, group)][-1])

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "metric", "group", "value"])
            for it in range(len(self)):
                for (metric, group), vals in self.series.items():
                    w.writerow([it, metric, group, repr(vals[it])])


def _record(traj: Trajectory, pool: AgentPool, pred: np.ndarray) -> None:
    a = pool.protected
    sp = statistical_parity(pred, a)
    traj.record("positive_rate", "0", sp.rate_0)
    traj.record("positive_rate", "1", sp.rate_1)
    traj.record("parity_difference", "all", sp.difference)
    traj.record("parity_ratio", "all", sp.ratio)
    eo = equality_of_opportunity(pred, pool.true_label, a)
    traj.record("tpr", "0", eo.tpr_0)
    traj.record("tpr", "1", eo.tpr_1)
    traj.record("opportunity_difference", "all", eo.difference)
    label = statistical_parity(pool.true_label, a)
    traj.record("label_rate", "0", label.rate_0)
    traj.record("label_rate", "1", label.rate_1)
    traj.record("label_rate_difference", "all", label.difference)
    wrong = pred != pool.true_label
    for g in (0, 1):
        traj.record("misclassified", str(g), int(wrong[a == g].sum()))
        traj.record("false_negatives", str(g), int((wrong & (pool.true_label == 1))[a == g].sum()))
    mean_skill = pool.skills.mean(axis=1)
    traj.record("skill_gap", "all", mean_skill[a == 1].mean() - mean_skill[a == 0].mean())


def run_simulation(cfg: SimConfig, freeze_classifier: bool = False) -> Trajectory:
    """Iterate fit -> classify -> record -> step for ``cfg.iterations`` rounds.

    Metrics are recorded on the pool the classifier just saw. With
    ``freeze_classifier`` the first fitted model is reused throughout. When
    the labels collapse to a single class the previous model is kept.
    """
    rng = np.random.default_rng(cfg.seed)
    pool = init_population(cfg, rng)
    traj = Trajectory(cfg)
    model = None
    for _ in range(cfg.iterations):
        X = features(pool, cfg.classifier_variant)
        if model is None or (not freeze_classifier and np.unique(pool.true_label).size == 2):
            model = fit_logistic(X, pool.true_label, cfg.learning_rate, cfg.max_epochs, cfg.tol)
        pred = classify(model, pool, cfg.classifier_variant)
        _record(traj, pool, pred)
        pool = step(pool, pred, cfg, rng)
    return traj


def paired_runs(cfg: SimConfig, seeds) -> list[tuple[Trajectory, Trajectory]]:
    """(biased, unbiased) trajectories sharing each seed."""
    return [
        (
            run_simulation(replace(cfg, seed=s, classifier_variant="biased")),
            run_simulation(replace(cfg, seed=s, classifier_variant="unbiased")),
        )
        for s in seeds
    ]


class TradeOff(NamedTuple):
    n_pairs: int
    gap_wins: int
    misclassification_wins: int
    joint_wins: int
    p_value: float


def trade_off_test(pairs) -> TradeOff:
    """One-sided sign test over (biased, unbiased) trajectory pairs.

    A pair counts when the biased run ends with a smaller between-group gap
    in the true positive labels and accumulates more protected-group false
    negatives (qualified agents classified as low prospects).
    """
    gap = mis = joint = 0
    for b, u in pairs:
        g = b.final("label_rate_difference") < u.final("label_rate_difference")
        m = b.get("false_negatives", "0").sum() > u.get("false_negatives", "0").sum()
        gap += g
        mis += m
        joint += g and m
    n = len(pairs)
    p = float(stats.binomtest(joint, n, 0.5, alternative="greater").pvalue) if n else 1.0
    return TradeOff(n, gap, mis, joint, p)
