"""Monte-Carlo bound validity checks on tasks with exactly known risk.

Real LLM pipelines can never tell you whether a bound actually held, because
the population risk is unobservable. Here the hypothesis set is a finite
family of deterministic classifiers over a small explicit input distribution,
so the population risk of every hypothesis is an exact finite sum. Each trial
draws a fresh sample, selects the hypothesis the bound-regularized rule would
select, and checks the bound against the exact risk; over many trials the
violation frequency must stay below delta.

The selection inside a trial deliberately mirrors the optimizer (argmin of
the bound), so what gets validated is the bound as used, after
data-dependent selection.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .bounds import (
    BoundFamily,
    BoundInputs,
    KlNats,
    compute_bound,
    data_dependent_expected_gap,
)

__all__ = [
    "SyntheticTask",
    "CoverageReport",
    "true_risk",
    "coverage_trial_suite",
    "expected_gap_check",
    "make_synthetic_task",
]

MAX_HYPOTHESES = 10_000
MAX_UNIVERSE = 1_000


@dataclass(frozen=True)
class SyntheticTask:
    """Finite hypothesis set over an explicit input distribution.

    ``hypotheses`` maps a short synthetic "prompt" id to that classifier's
    predicted label (0/1) for every example; ``labels`` is the deterministic
    ground truth. Everything is small enough to enumerate exactly.
    """

    example_ids: tuple[str, ...]
    weights: tuple[float, ...]
    labels: Mapping[str, int]
    hypotheses: Mapping[str, Mapping[str, int]]

    def __post_init__(self) -> None:
        if len(self.example_ids) != len(self.weights):
            raise ValueError("one weight per example required")
        if len(self.example_ids) > MAX_UNIVERSE:
            raise ValueError(f"example universe capped at {MAX_UNIVERSE}")
        if len(self.hypotheses) > MAX_HYPOTHESES:
            raise ValueError(f"hypothesis set capped at {MAX_HYPOTHESES}")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        for ex in self.example_ids:
            if ex not in self.labels:
                raise ValueError(f"example {ex!r} has no label")
        for hyp_id, preds in self.hypotheses.items():
            for ex in self.example_ids:
                if ex not in preds:
                    raise ValueError(f"hypothesis {hyp_id!r} is silent on {ex!r}")

    @property
    def hypothesis_ids(self) -> tuple[str, ...]:
        return tuple(self.hypotheses)


def true_risk(task: SyntheticTask, hypothesis_id: str) -> float:
    """Exact population risk by full enumeration of the example universe."""
    preds = task.hypotheses[hypothesis_id]
    return math.fsum(
        w
        for ex, w in zip(task.example_ids, task.weights)
        if preds[ex] != task.labels[ex]
    )


def _empirical_risk(task: SyntheticTask, hypothesis_id: str, sample: Sequence[str]) -> float:
    preds = task.hypotheses[hypothesis_id]
    return sum(1 for ex in sample if preds[ex] != task.labels[ex]) / len(sample)


@dataclass
class CoverageReport:
    """Outcome of a seeded trial suite, with per-trial rows for replay."""

    family: str
    delta: float
    trials: int
    violations: int
    mean_slack: float
    config: dict
    rows: list[dict] = field(default_factory=list)

    @property
    def coverage(self) -> float:
        return 1.0 - self.violations / self.trials

    def to_dict(self, include_rows: bool = True) -> dict:
        payload = {
            "family": self.family,
            "delta": self.delta,
            "trials": self.trials,
            "violations": self.violations,
            "coverage": self.coverage,
            "mean_slack": self.mean_slack,
            "config": self.config,
        }
        if include_rows:
            payload["rows"] = self.rows
        return payload


def _log_softmax(scores: Mapping[str, float]) -> dict[str, float]:
    peak = max(scores.values())
    log_z = peak + math.log(
        math.fsum(math.exp(s - peak) for s in scores.values())
    )
    return {h: s - log_z for h, s in scores.items()}


def coverage_trial_suite(
    task: SyntheticTask,
    family: BoundFamily,
    prior_assignment: Mapping[str, float],
    m: int,
    delta: float,
    trials: int,
    seed: int,
    *,
    sigma: float = 0.5,
    eta: float = 0.5,
    m_prior: int = 0,
    prior_sharpness: float = 5.0,
) -> CoverageReport:
    """Draw ``trials`` samples; select by bound; count violations against exact risk.

    ``prior_assignment`` gives a base log-prior per hypothesis whose total
    mass may not exceed one. For the classical families the trial is: draw a
    size-``m`` sample, compute every hypothesis's bound at its empirical
    risk, select the argmin, and flag a violation when the exact risk exceeds
    the selected bound. For the data-dependent family ``m`` plays the role of
    the full sample size n: a uniform subset of ``m_prior`` sample points is
    held out, the prior is re-weighted towards hypotheses that fit that
    subset (softmax at ``prior_sharpness``, measurable from the subset alone),
    and the bound is checked at derandomization level ``eta`` while empirical
    risk stays measured on the full sample.
    """
    family = BoundFamily(family)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials!r}")
    for hyp_id in task.hypothesis_ids:
        if hyp_id not in prior_assignment:
            raise ValueError(f"prior_assignment is missing hypothesis {hyp_id!r}")
    mass = math.fsum(math.exp(lp) for lp in prior_assignment.values())
    if mass > 1.0 + 1e-9:
        raise ValueError(f"prior mass {mass} exceeds 1; not a sub-probability")
    if family is BoundFamily.DATA_DEPENDENT and m_prior >= m:
        raise ValueError(f"m_prior={m_prior} must be below the sample size m={m}")

    rng = random.Random(seed)
    hyp_ids = task.hypothesis_ids
    exact = {h: true_risk(task, h) for h in hyp_ids}
    rows: list[dict] = []
    violations = 0
    slacks: list[float] = []

    for trial in range(trials):
        sample = rng.choices(task.example_ids, weights=task.weights, k=m)
        if family is BoundFamily.DATA_DEPENDENT:
            prior_positions = rng.sample(range(m), m_prior)
            subset = [sample[i] for i in prior_positions]
            if subset:
                fit = {
                    h: prior_assignment[h]
                    - prior_sharpness * _empirical_risk(task, h, subset)
                    for h in hyp_ids
                }
                log_prior = _log_softmax(fit)
            else:
                log_prior = _log_softmax(dict(prior_assignment))
        else:
            log_prior = dict(prior_assignment)

        best = None
        for h in hyp_ids:
            emp = _empirical_risk(task, h, sample)
            inputs = BoundInputs(
                emp_risk=emp,
                kl=KlNats(-log_prior[h]),
                m=m,
                delta=delta,
                n=m if family is BoundFamily.DATA_DEPENDENT else None,
                m_prior=m_prior if family is BoundFamily.DATA_DEPENDENT else 0,
                sigma=sigma,
                eta=eta,
            )
            value = compute_bound(inputs, family)
            key = (value.bound, emp, h)
            if best is None or key < best[0]:
                best = (key, h, emp, value)

        assert best is not None
        _, selected, emp, value = best
        violated = exact[selected] > value.bound
        violations += int(violated)
        slacks.append(value.bound - exact[selected])
        rows.append(
            {
                "trial": trial,
                "selected": selected,
                "emp_risk": emp,
                "true_risk": exact[selected],
                "bound": value.bound,
                "kl": value.inputs.kl.value,
                "violated": violated,
            }
        )

    return CoverageReport(
        family=family.value,
        delta=delta,
        trials=trials,
        violations=violations,
        mean_slack=math.fsum(slacks) / trials,
        config={
            "m": m,
            "seed": seed,
            "sigma": sigma,
            "eta": eta,
            "m_prior": m_prior,
            "prior_sharpness": prior_sharpness,
            "hypotheses": len(hyp_ids),
        },
        rows=rows,
    )


def expected_gap_check(
    report: CoverageReport, sigma: float, n: int, m_prior: int
) -> tuple[float, float]:
    """Monte-Carlo mean |R - emp_risk| vs. the closed-form expected gap.

    Uses the mean KL of the selected posterior across the report's trials as
    the plug-in for the expected divergence. Returns (mc_mean_gap,
    closed_form_gap); validity means the first is at most the second.
    """
    if not report.rows:
        raise ValueError("report has no trial rows")
    mc_mean = math.fsum(
        abs(row["true_risk"] - row["emp_risk"]) for row in report.rows
    ) / len(report.rows)
    mean_kl = math.fsum(row["kl"] for row in report.rows) / len(report.rows)
    closed_form = data_dependent_expected_gap(sigma, n, m_prior, KlNats(mean_kl))
    return mc_mean, closed_form


def make_synthetic_task(
    n_examples: int = 8,
    n_hypotheses: int = 16,
    seed: int = 0,
    weights: Sequence[float] | None = None,
) -> SyntheticTask:
    """Build a reproducible task: uniform universe, random classifiers.

    The first hypothesis is always the true labeling rule (risk 0) and the
    rest flip a seeded random subset of labels, spreading exact risks over
    (0, 1]. Hypothesis ids are short synthetic "prompts".
    """
    rng = random.Random(seed)
    example_ids = tuple(f"x{i}" for i in range(n_examples))
    if weights is None:
        weights = tuple(1.0 / n_examples for _ in range(n_examples))
    labels = {ex: int(i >= n_examples / 2) for i, ex in enumerate(example_ids)}
    hypotheses: dict[str, dict[str, int]] = {"rule-0": dict(labels)}
    for j in range(1, n_hypotheses):
        flips = rng.sample(example_ids, rng.randint(1, n_examples))
        hypotheses[f"rule-{j}"] = {
            ex: 1 - labels[ex] if ex in flips else labels[ex] for ex in example_ids
        }
    return SyntheticTask(
        example_ids=example_ids,
        weights=tuple(weights),
        labels=labels,
        hypotheses=hypotheses,
    )
