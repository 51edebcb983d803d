import csv
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from reckit.fairsim import (
    AgentPool,
    SimConfig,
    Trajectory,
    classify,
    equality_of_opportunity,
    features,
    fit_logistic,
    four_fifths_check,
    init_population,
    run_simulation,
    sigmoid,
    statistical_parity,
    step,
    trade_off_test,
)

SMALL = SimConfig(n_agents=120, iterations=4)


def pool_of(skills, protected):
    skills = np.asarray(skills, dtype=float).reshape(len(protected), -1)
    y = (skills.mean(axis=1) >= 0.5).astype(int)
    return AgentPool(skills, np.asarray(protected), y, np.zeros_like(y), y.copy())


class TestConfig:
    def test_validation(self):
        for bad in ({"iterations": 0}, {"help_boost": -1}, {"group_means": (0.5,)}, {"classifier_variant": "x"},
                    {"help_target": "mid"}, {"protected_share": 1.0}, {"n_agents": 1}):
            with pytest.raises(ValueError):
                SimConfig(**bad)

    def test_dict_roundtrip(self, tmp_path):
        cfg = SimConfig(n_agents=50, group_means=[0.3, 0.7])
        assert SimConfig.from_dict(cfg.to_dict()) == cfg
        (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
        assert SimConfig.from_json(tmp_path / "c.json") == cfg
        with pytest.raises(ValueError, match="bogus"):
            SimConfig.from_dict({"bogus": 1})


class TestPopulation:
    def test_base_rates_match_normal_cdf(self):
        cfg = SimConfig(n_agents=10_000, skill_dim=1, group_means=(0.4, 0.6), noise_sd=0.1)
        pool = init_population(cfg, np.random.default_rng(0))
        for a, mean in ((0, 0.4), (1, 0.6)):
            expected = 1.0 - norm.cdf(0.5, loc=mean, scale=0.1)
            assert pool.true_label[pool.protected == a].mean() == pytest.approx(expected, abs=0.02)

    def test_equal_means_no_gap(self):
        cfg = SimConfig(n_agents=4000, group_means=(0.5, 0.5))
        pool = init_population(cfg, np.random.default_rng(1))
        m = pool.skills.mean(axis=1)
        g0, g1 = m[pool.protected == 0], m[pool.protected == 1]
        se = np.sqrt(g0.var(ddof=1) / g0.size + g1.var(ddof=1) / g1.size)
        assert abs(g0.mean() - g1.mean()) <= 3 * se

    def test_shares_and_determinism(self):
        cfg = SimConfig(n_agents=100, protected_share=0.3)
        a = init_population(cfg, np.random.default_rng(5))
        b = init_population(cfg, np.random.default_rng(5))
        assert (a.protected == 0).sum() == 30
        assert np.array_equal(a.skills, b.skills) and np.array_equal(a.true_label, b.true_label)
        assert np.all((a.skills >= 0) & (a.skills <= 1))


class TestLogistic:
    def test_sigmoid(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(np.array([-800.0, 800.0])) == pytest.approx([0.0, 1.0])

    def test_separable(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, 400)
        x = x[np.abs(x) > 0.05]
        y = (x > 0).astype(int)
        m = fit_logistic(x[:, None], y)
        assert ((m.proba(x[:, None]) >= 0.5) == y).mean() >= 0.99

    def test_independent_labels_give_base_rate(self):
        rng = np.random.default_rng(1)
        X = rng.random((4000, 2))
        y = (rng.random(4000) < 0.3).astype(int)
        m = fit_logistic(X, y)
        assert m.proba(X).mean() == pytest.approx(y.mean(), abs=0.02)
        assert np.all(np.abs(m.proba(X) - y.mean()) < 0.1)

    def test_duplicated_data_same_fit(self):
        rng = np.random.default_rng(2)
        X = rng.random((100, 3))
        y = (X.sum(axis=1) + rng.normal(0, 0.3, 100) > 1.5).astype(int)
        a = fit_logistic(X, y, max_epochs=800)
        b = fit_logistic(np.vstack([X, X]), np.concatenate([y, y]), max_epochs=800)
        assert a.weights == pytest.approx(b.weights, abs=1e-9) and a.bias == pytest.approx(b.bias, abs=1e-9)

    def test_single_class_and_divergence(self):
        with pytest.raises(ValueError):
            fit_logistic(np.ones((5, 1)), np.ones(5))
        X = np.array([[1e300], [-1e300]])
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(FloatingPointError):
            fit_logistic(X, np.array([1, 0]), learning_rate=1e10, max_epochs=3)

    def test_tolerance_stops_early(self):
        X = np.array([[0.0], [1.0], [0.0], [1.0]])
        m = fit_logistic(X, np.array([0, 1, 1, 0]), tol=1e-3)
        assert m.epochs < 5000


class TestClassify:
    @given(st.integers(0, 10_000), st.integers(0, 59))
    def test_unbiased_ignores_attribute(self, seed, who):
        pool = init_population(SimConfig(n_agents=60), np.random.default_rng(seed))
        if np.unique(pool.true_label).size < 2:
            return
        m = fit_logistic(features(pool, "unbiased"), pool.true_label, max_epochs=200)
        before = classify(m, pool, "unbiased")
        flipped = pool.copy()
        flipped.protected[who] = 1 - flipped.protected[who]
        assert np.array_equal(before, classify(m, flipped, "unbiased"))

    def test_biased_uses_attribute(self):
        rng = np.random.default_rng(3)
        a = np.repeat([0, 1], 100)
        pool = AgentPool(rng.uniform(0.45, 0.55, (200, 2)), a, a.copy(), np.zeros(200, int), a.copy())
        m = fit_logistic(features(pool, "biased"), pool.true_label)
        flipped = pool.copy()
        flipped.protected = 1 - flipped.protected
        assert np.any(classify(m, pool, "biased") != classify(m, flipped, "biased"))
        with pytest.raises(ValueError):
            features(pool, "other")

    def test_identical_agents(self):
        pool = pool_of([[0.6, 0.6]] * 5, [0, 0, 1, 1, 1])
        m = fit_logistic(np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([0, 1]))
        assert len(set(classify(m, pool, "unbiased").tolist())) == 1


class TestStep:
    def test_null_dynamics(self):
        cfg = SimConfig(help_boost=0.0, decay=0.0)
        pool = init_population(cfg, np.random.default_rng(0))
        pred = np.random.default_rng(1).integers(0, 2, len(pool))
        nxt = step(pool, pred, cfg, np.random.default_rng(2))
        assert np.array_equal(nxt.skills, pool.skills) and np.array_equal(nxt.true_label, pool.true_label)
        assert np.array_equal(nxt.predicted, pred)

    def test_helped_ten_times(self):
        cfg = SimConfig(help_boost=0.02)
        pool = pool_of([[0.3, 0.4]], [0])
        rng = np.random.default_rng(0)
        for _ in range(10):
            pool = step(pool, [1], cfg, rng)
        assert pool.skills[0] == pytest.approx([0.5, 0.6])
        assert pool.true_label[0] == 1

    def test_decay_and_clipping(self):
        cfg = SimConfig(help_boost=0.3, decay=0.3)
        pool = pool_of([[0.9], [0.1]], [0, 1])
        pool = step(pool, [1, 0], cfg, np.random.default_rng(0))
        assert pool.skills[:, 0].tolist() == [1.0, 0.0]

    def test_help_low_prospects(self):
        cfg = SimConfig(help_target="low", help_boost=0.1, decay=0.0)
        pool = step(pool_of([[0.3], [0.3]], [0, 1]), [0, 1], cfg, np.random.default_rng(0))
        assert pool.skills[:, 0] == pytest.approx([0.4, 0.3])

    def test_employment_needs_label(self):
        cfg = SimConfig()
        pool = init_population(cfg, np.random.default_rng(0))
        nxt = step(pool, np.ones(len(pool), int), cfg, np.random.default_rng(0))
        assert np.all(nxt.employed <= nxt.true_label)


class TestFairnessMeasures:
    def test_four_fifths_example(self):
        pred = [1, 1, 0, 0, 0, 1, 1, 1, 0, 0]
        attrs = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]
        # hand count: protected 2/5 = 0.4, privileged 3/5 = 0.6
        sp = statistical_parity(pred, attrs)
        assert (sp.rate_0, sp.rate_1) == (0.4, 0.6)
        assert sp.difference == pytest.approx(0.2)
        sp = statistical_parity([1] * 4 + [0] * 6 + [1] * 5 + [0] * 5, [0] * 10 + [1] * 10)
        assert sp.ratio == 0.8 and four_fifths_check(sp.ratio)

    def test_constant_classifier(self):
        for c in (0, 1):
            sp = statistical_parity([c] * 6, [0, 1, 0, 1, 1, 0])
            assert sp.difference == 0.0 and sp.ratio == 1.0
        assert statistical_parity([1, 0], [0, 1]).ratio == float("inf")
        with pytest.raises(ValueError):
            statistical_parity([1, 1], [0, 0])

    def test_four_fifths_bounds(self):
        assert four_fifths_check(0.8) and not four_fifths_check(0.79) and four_fifths_check(1.0)

    def test_opportunity(self):
        y = [1, 1, 0, 1, 1, 1, 0, 0]
        a = [0, 0, 0, 0, 1, 1, 1, 1]
        eo = equality_of_opportunity(y, y, a)
        assert (eo.tpr_0, eo.tpr_1, eo.difference) == (1.0, 1.0, 0.0)
        # hand table: protected qualified {0,1,3} -> 1 hit; privileged {4,5} -> 2 hits
        eo = equality_of_opportunity([0, 1, 1, 0, 1, 1, 1, 0], y, a)
        assert eo.tpr_0 == pytest.approx(1 / 3) and eo.tpr_1 == 1.0
        eo = equality_of_opportunity([1, 1, 1, 1], [0, 0, 1, 1], [0, 0, 1, 1])
        assert eo.undefined == (0,) and np.isnan(eo.tpr_0)

    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)), min_size=2, max_size=100))
    def test_brute_force(self, rows):
        pred, y, a = (list(c) for c in zip(*rows))
        if len(set(a)) < 2:
            return
        sp = statistical_parity(pred, a)
        for g, rate in ((0, sp.rate_0), (1, sp.rate_1)):
            members = [p for p, aa in zip(pred, a) if aa == g]
            assert rate == sum(members) / len(members)
            assert 0.0 <= rate <= 1.0
        assert sp.difference == abs(sp.rate_0 - sp.rate_1)
        eo = equality_of_opportunity(pred, y, a)
        for g, tpr in ((0, eo.tpr_0), (1, eo.tpr_1)):
            q = [p for p, yy, aa in zip(pred, y, a) if aa == g and yy == 1]
            if q:
                assert tpr == sum(q) / len(q) and 0.0 <= tpr <= 1.0
            else:
                assert g in eo.undefined


class TestSimulation:
    def test_iterations_one(self):
        traj = run_simulation(replace(SMALL, iterations=1))
        assert len(traj) == 1
        assert all(len(v) == 1 for v in traj.series.values())

    def test_bit_identical_reruns(self):
        a, b = run_simulation(SMALL), run_simulation(SMALL)
        assert a.series == b.series
        assert run_simulation(replace(SMALL, seed=1)).series != a.series

    def test_null_dynamics_constant(self):
        cfg = replace(SMALL, help_boost=0.0, decay=0.0)
        traj = run_simulation(cfg, freeze_classifier=True)
        for key, vals in traj.series.items():
            assert np.all(np.asarray(vals) == vals[0]), key

    def test_symmetric_null(self):
        cfg = SimConfig(group_means=(0.5, 0.5), classifier_variant="unbiased", iterations=5)
        traj = run_simulation(cfg)
        assert np.all(traj.get("parity_difference") < 0.15)

    def test_metrics_recorded(self, tmp_path):
        traj = run_simulation(SMALL)
        for key in (("positive_rate", "0"), ("tpr", "1"), ("label_rate_difference", "all"), ("misclassified", "0"),
                    ("false_negatives", "1"), ("skill_gap", "all"), ("parity_ratio", "all")):
            assert len(traj.series[key]) == SMALL.iterations
        assert np.all(traj.get("false_negatives", "0") <= traj.get("misclassified", "0"))
        traj.to_csv(tmp_path / "t.csv")
        with open(tmp_path / "t.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iteration", "metric", "group", "value"]
        assert len(rows) - 1 == SMALL.iterations * len(traj.series)

    def test_trade_off_counts(self):
        def traj(gap, fn):
            t = Trajectory(SMALL)
            t.series[("label_rate_difference", "all")] = [0.3, gap]
            t.series[("false_negatives", "0")] = [fn, fn]
            return t

        pairs = [(traj(0.1, 5), traj(0.2, 3))] * 6 + [(traj(0.3, 5), traj(0.2, 3)), (traj(0.1, 1), traj(0.2, 3))]
        res = trade_off_test(pairs)
        assert (res.n_pairs, res.gap_wins, res.misclassification_wins, res.joint_wins) == (8, 7, 7, 6)
        # P(X >= 6) for X ~ Bin(8, 1/2)
        assert res.p_value == pytest.approx((28 + 8 + 1) / 256)
        assert trade_off_test([]).p_value == 1.0
