"""Exact risk enumeration and Monte-Carlo coverage of the bounds."""

import itertools
import math

import pytest

from promptbound.bounds import BoundFamily
from promptbound.validator import (
    SyntheticTask,
    coverage_trial_suite,
    expected_gap_check,
    make_synthetic_task,
    true_risk,
)


def two_point_task():
    labels = {"x0": 0, "x1": 1}
    return SyntheticTask(
        example_ids=("x0", "x1"),
        weights=(0.5, 0.5),
        labels=labels,
        hypotheses={
            "perfect": dict(labels),
            "inverted": {k: 1 - v for k, v in labels.items()},
        },
    )


def uniform_prior(task):
    lp = -math.log(len(task.hypothesis_ids))
    return {h: lp for h in task.hypothesis_ids}


class TestTrueRisk:
    def test_matching_rule_is_zero(self):
        assert true_risk(two_point_task(), "perfect") == 0.0

    def test_complement_rule_is_one(self):
        assert true_risk(two_point_task(), "inverted") == 1.0

    def test_partial_disagreement(self):
        ids = tuple(f"x{i}" for i in range(8))
        labels = {ex: 0 for ex in ids}
        wrong_on_three = {ex: (1 if ex in ("x1", "x4", "x6") else 0) for ex in ids}
        task = SyntheticTask(
            example_ids=ids,
            weights=tuple(1 / 8 for _ in ids),
            labels=labels,
            hypotheses={"h": wrong_on_three},
        )
        assert true_risk(task, "h") == 0.375

    def test_weighted_universe(self):
        ids = ("a", "b")
        task = SyntheticTask(
            example_ids=ids,
            weights=(0.9, 0.1),
            labels={"a": 0, "b": 1},
            hypotheses={"h": {"a": 1, "b": 1}},
        )
        assert math.isclose(true_risk(task, "h"), 0.9, rel_tol=1e-12)

    def test_brute_force_dataset_enumeration(self):
        # For tiny universes, true risk equals the probability-weighted mean
        # of empirical risks over every possible ordered dataset.
        ids = ("u", "v", "w", "z")
        weights = (0.4, 0.3, 0.2, 0.1)
        labels = {"u": 0, "v": 1, "w": 1, "z": 0}
        hyp = {"u": 0, "v": 0, "w": 1, "z": 1}
        task = SyntheticTask(ids, weights, labels, {"h": hyp})
        for m in (1, 2, 3):
            total = 0.0
            for combo in itertools.product(range(4), repeat=m):
                prob = math.prod(weights[i] for i in combo)
                emp = sum(hyp[ids[i]] != labels[ids[i]] for i in combo) / m
                total += prob * emp
            assert abs(total - true_risk(task, "h")) < 1e-12


class TestTaskValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            SyntheticTask(("a",), (0.5,), {"a": 0}, {"h": {"a": 0}})

    def test_hypothesis_must_cover_universe(self):
        with pytest.raises(ValueError, match="silent"):
            SyntheticTask(("a", "b"), (0.5, 0.5), {"a": 0, "b": 1}, {"h": {"a": 0}})

    def test_generated_task_is_reproducible(self):
        a = make_synthetic_task(8, 16, seed=3)
        b = make_synthetic_task(8, 16, seed=3)
        assert a == b
        assert true_risk(a, "rule-0") == 0.0


class TestCoverage:
    def test_degenerate_distribution_perfect_hypothesis(self):
        labels = {"only": 1, "never": 0}
        task = SyntheticTask(
            example_ids=("only", "never"),
            weights=(1.0, 0.0),
            labels=labels,
            hypotheses={"good": dict(labels), "bad": {"only": 0, "never": 1}},
        )
        report = coverage_trial_suite(
            task, BoundFamily.MCALLESTER, uniform_prior(task),
            m=20, delta=0.1, trials=50, seed=0,
        )
        assert report.violations == 0
        assert report.coverage == 1.0

    @pytest.mark.parametrize(
        "family", [BoundFamily.MCALLESTER, BoundFamily.TOLSTIKHIN_SELDIN]
    )
    def test_classical_coverage_16_hypotheses(self, family):
        task = make_synthetic_task(8, 16, seed=0)
        report = coverage_trial_suite(
            task, family, uniform_prior(task), m=50, delta=0.1, trials=300, seed=1,
        )
        slack = 3 * math.sqrt(0.1 * 0.9 / report.trials)
        assert report.coverage >= 0.9 - slack
        assert report.mean_slack > 0.0
        assert len(report.rows) == 300

    def test_selection_is_argmin_bound(self):
        task = make_synthetic_task(8, 16, seed=0)
        report = coverage_trial_suite(
            task, BoundFamily.MCALLESTER, uniform_prior(task),
            m=30, delta=0.1, trials=20, seed=2,
        )
        # With a uniform prior and a fixed m the bound is risk + constant, so
        # the selected hypothesis must carry the trial's minimum bound, which
        # equals minimum empirical risk.
        for row in report.rows:
            assert row["bound"] >= row["emp_risk"]

    def test_reproducible_from_seed(self):
        task = make_synthetic_task(8, 16, seed=0)
        reports = [
            coverage_trial_suite(
                task, BoundFamily.TOLSTIKHIN_SELDIN, uniform_prior(task),
                m=40, delta=0.1, trials=50, seed=77,
            )
            for _ in range(2)
        ]
        assert reports[0].rows == reports[1].rows
        assert reports[0].to_dict() == reports[1].to_dict()

    def test_prior_mass_above_one_rejected(self):
        task = two_point_task()
        with pytest.raises(ValueError, match="mass"):
            coverage_trial_suite(
                task, BoundFamily.MCALLESTER, {"perfect": 0.1, "inverted": 0.1},
                m=10, delta=0.1, trials=5, seed=0,
            )

    def test_missing_hypothesis_in_prior(self):
        task = two_point_task()
        with pytest.raises(ValueError, match="missing hypothesis"):
            coverage_trial_suite(
                task, BoundFamily.MCALLESTER, {"perfect": -1.0},
                m=10, delta=0.1, trials=5, seed=0,
            )

    def test_subprobability_prior_allowed(self):
        task = two_point_task()
        report = coverage_trial_suite(
            task, BoundFamily.MCALLESTER, {"perfect": -3.0, "inverted": -3.0},
            m=10, delta=0.1, trials=20, seed=0,
        )
        assert report.trials == 20


class TestDataDependentTrials:
    def test_coverage_at_eta_and_gap_statement(self):
        task = make_synthetic_task(8, 16, seed=0)
        n, m_prior = 50, 10
        report = coverage_trial_suite(
            task, BoundFamily.DATA_DEPENDENT, uniform_prior(task),
            m=n, delta=0.1, trials=300, seed=3,
            sigma=0.5, eta=0.5, m_prior=m_prior,
        )
        # Coverage is reported at the derandomization level eta.
        slack = 3 * math.sqrt(0.5 * 0.5 / report.trials)
        assert report.coverage >= 0.5 - slack
        mc_mean, closed_form = expected_gap_check(report, 0.5, n, m_prior)
        assert mc_mean <= closed_form

    def test_prior_reweighting_is_j_measurable(self):
        # Same seed, same J draws: per-trial KL must be reproducible, and the
        # data-dependent prior should put above-uniform mass on hypotheses
        # fitting the held-out subset.
        task = make_synthetic_task(8, 16, seed=1)
        report = coverage_trial_suite(
            task, BoundFamily.DATA_DEPENDENT, uniform_prior(task),
            m=40, delta=0.1, trials=50, seed=9, m_prior=8,
        )
        uniform_kl = math.log(16)
        assert any(row["kl"] < uniform_kl for row in report.rows)

    def test_m_prior_must_stay_below_m(self):
        task = make_synthetic_task(4, 4, seed=0)
        with pytest.raises(ValueError, match="m_prior"):
            coverage_trial_suite(
                task, BoundFamily.DATA_DEPENDENT, uniform_prior(task),
                m=10, delta=0.1, trials=5, seed=0, m_prior=10,
            )

    def test_gap_check_needs_rows(self):
        report = coverage_trial_suite(
            make_synthetic_task(4, 4, seed=0), BoundFamily.MCALLESTER,
            uniform_prior(make_synthetic_task(4, 4, seed=0)),
            m=10, delta=0.1, trials=2, seed=0,
        )
        report.rows = []
        with pytest.raises(ValueError, match="no trial rows"):
            expected_gap_check(report, 0.5, 10, 2)
