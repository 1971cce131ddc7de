"""PAC-Bayes generalization-bound formulas over discrete prompt spaces.

Everything in this module is a pure function of its inputs: no state, no
randomness, no clock. All logarithms are natural (nats). Bounds are returned
un-clipped, so vacuous values (> 1 for 0-1 loss) stay visible.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

__all__ = [
    "BoundFamily",
    "KlNats",
    "BoundInputs",
    "BoundValue",
    "kl_uniform_posterior",
    "mcallester_bound",
    "tolstikhin_seldin_bound",
    "data_dependent_expected_gap",
    "data_dependent_bound",
    "n_adjusted_bound",
    "compute_bound",
]


class BoundFamily(str, enum.Enum):
    """The three bound formulas this package computes."""

    MCALLESTER = "mcallester"
    TOLSTIKHIN_SELDIN = "tolstikhin_seldin"
    DATA_DEPENDENT = "data_dependent"


@dataclass(frozen=True)
class KlNats:
    """A KL divergence value in nats.

    ``negative_input_warning`` marks values produced from inconsistent
    log-probability inputs (e.g. positive "log-probs" from a miscalibrated
    backend). Such values are carried through rather than clamped, and are
    rejected by a bound formula only when they would put a radicand below
    zero.
    """

    value: float
    negative_input_warning: bool = False

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"KL must be finite, got {self.value!r}")


@dataclass(frozen=True)
class BoundInputs:
    """Complete, audited set of quantities entering a bound computation.

    ``m`` is the sample count the empirical risk was measured on. ``n`` and
    ``m_prior`` only matter for the data-dependent family: ``n`` is the total
    sample size and ``m_prior`` the size of the prior subset carved out of it.
    ``sigma`` is the subgaussian parameter of the loss (0.5 for any loss
    bounded in [0, 1]); ``eta`` is the Markov derandomization level.
    """

    emp_risk: float
    kl: KlNats
    m: int
    delta: float
    n: int | None = None
    m_prior: int = 0
    sigma: float = 0.5
    eta: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.emp_risk <= 1.0:
            raise ValueError(f"emp_risk must be in [0, 1], got {self.emp_risk!r}")
        if not isinstance(self.m, int) or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {self.delta!r}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"eta must be in (0, 1), got {self.eta!r}")
        if not isinstance(self.m_prior, int) or self.m_prior < 0:
            raise ValueError(f"m_prior must be a nonnegative integer, got {self.m_prior!r}")
        if self.n is not None:
            if not isinstance(self.n, int) or self.n < 1:
                raise ValueError(f"n must be a positive integer, got {self.n!r}")
            if self.m_prior >= self.n:
                raise ValueError(
                    f"prior subset must be strictly smaller than the sample: "
                    f"m_prior={self.m_prior} >= n={self.n}"
                )


@dataclass(frozen=True)
class BoundValue:
    """An audited bound: the number, the formula family, and its inputs.

    ``gap_term`` is the additive complexity part, ``bound - emp_risk``.
    ``n_adjusted`` marks comparison-only recomputations at a common sample
    size (see :func:`n_adjusted_bound`).
    """

    bound: float
    family: BoundFamily
    inputs: BoundInputs
    gap_term: float
    n_adjusted: bool = False


def kl_uniform_posterior(log_priors: Sequence[float]) -> KlNats:
    """KL divergence of a uniform posterior over k prompts from the prior.

    For a posterior that is uniform over k prompts with prior log-probabilities
    ``log_priors``, the divergence has the closed form

        KL = -log(k) - (1/k) * sum_i log_priors[i]

    With k = 1 this reduces to the negated log-probability of the single
    prompt. Growing k over prompts of similar prior probability buys an exact
    -log(k) reduction.

    Raises ValueError on an empty list or any non-finite entry. Entries above
    zero (impossible for true log-probabilities) are accepted but may drive
    the result negative, which sets ``negative_input_warning``.
    """
    k = len(log_priors)
    if k == 0:
        raise ValueError("log_priors must be non-empty")
    for i, lp in enumerate(log_priors):
        if not math.isfinite(lp):
            raise ValueError(f"log_priors[{i}] must be finite, got {lp!r}")
    value = -math.log(k) - math.fsum(log_priors) / k
    return KlNats(value=value, negative_input_warning=value < 0.0)


def mcallester_bound(inputs: BoundInputs) -> BoundValue:
    """Classic PAC-Bayes risk bound, holding with probability >= 1 - delta.

        R(Q) <= emp_risk + sqrt((KL + log(m / delta)) / (2 m))
    """
    radicand = (inputs.kl.value + math.log(inputs.m / inputs.delta)) / (2 * inputs.m)
    if radicand < 0.0:
        raise ValueError(
            f"negative radicand {radicand!r}: KL={inputs.kl.value!r} is negative "
            f"beyond log(m/delta); inputs are inconsistent"
        )
    gap = math.sqrt(radicand)
    return BoundValue(
        bound=inputs.emp_risk + gap,
        family=BoundFamily.MCALLESTER,
        inputs=inputs,
        gap_term=gap,
    )


def tolstikhin_seldin_bound(inputs: BoundInputs) -> BoundValue:
    """Risk bound whose gap decays like 1/m when the empirical risk is zero.

    With C = (KL + log(2 sqrt(m) / delta)) / m:

        R(Q) <= emp_risk + sqrt(2 * emp_risk * C) + 2 C
    """
    complexity = (
        inputs.kl.value + math.log(2.0 * math.sqrt(inputs.m) / inputs.delta)
    ) / inputs.m
    if complexity < 0.0:
        # With emp_risk > 0 this is literally a negative radicand; with
        # emp_risk = 0 it would push the bound below the empirical risk.
        raise ValueError(
            f"negative complexity term {complexity!r}: KL={inputs.kl.value!r} is "
            f"negative beyond log(2*sqrt(m)/delta); inputs are inconsistent"
        )
    gap = math.sqrt(2.0 * inputs.emp_risk * complexity) + 2.0 * complexity
    return BoundValue(
        bound=inputs.emp_risk + gap,
        family=BoundFamily.TOLSTIKHIN_SELDIN,
        inputs=inputs,
        gap_term=gap,
    )


def data_dependent_expected_gap(
    sigma: float, n: int, m_prior: int, kl: KlNats
) -> float:
    """Expected risk gap under a prior learned on a subset of the sample.

    For a sigma-subgaussian loss, a prior measurable from a size-``m_prior``
    subset of the ``n`` samples, and posterior KL divergence ``kl``:

        E[|R - emp_risk|] <= sqrt(2 * sigma^2 / (n - m_prior) * KL)
    """
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    if n <= m_prior:
        raise ValueError(
            f"prior subset must be strictly smaller than the sample: "
            f"m_prior={m_prior} >= n={n}"
        )
    if kl.value < 0.0:
        raise ValueError(f"KL must be nonnegative for the expected gap, got {kl.value!r}")
    return math.sqrt(2.0 * sigma * sigma / (n - m_prior) * kl.value)


def data_dependent_bound(inputs: BoundInputs) -> BoundValue:
    """High-probability form of the data-dependent expected-gap bound.

    The in-expectation gap is derandomized by Markov's inequality at level
    ``eta``: with probability at least 1 - eta over the sample draw,

        R <= emp_risk + expected_gap / eta

    The probability statement is documentation, not a runtime assertion;
    ``eta`` travels with the result so the hidden constant stays auditable.
    """
    if inputs.n is None:
        raise ValueError("data-dependent bound needs the total sample size n")
    gap = (
        data_dependent_expected_gap(inputs.sigma, inputs.n, inputs.m_prior, inputs.kl)
        / inputs.eta
    )
    return BoundValue(
        bound=inputs.emp_risk + gap,
        family=BoundFamily.DATA_DEPENDENT,
        inputs=inputs,
        gap_term=gap,
    )


_FAMILY_FN = {
    BoundFamily.MCALLESTER: mcallester_bound,
    BoundFamily.TOLSTIKHIN_SELDIN: tolstikhin_seldin_bound,
    BoundFamily.DATA_DEPENDENT: data_dependent_bound,
}


def compute_bound(inputs: BoundInputs, family: BoundFamily) -> BoundValue:
    """Dispatch to the requested bound family."""
    return _FAMILY_FN[BoundFamily(family)](inputs)


def n_adjusted_bound(
    inputs: BoundInputs, n_max: int, family: BoundFamily
) -> BoundValue:
    """Recompute a bound at a common sample size, for comparison only.

    Bandit-style evaluation tests better prompts on more examples, so raw
    bounds conflate prompt quality with sample size. This recomputes the
    chosen family's bound with the sample count replaced by ``n_max``
    (``m`` for the classical families, ``n`` for the data-dependent one),
    holding the measured empirical risk fixed. The result is flagged
    ``n_adjusted`` because the risk was not actually measured at ``n_max``.
    """
    family = BoundFamily(family)
    if n_max < 1:
        raise ValueError(f"n_max must be a positive integer, got {n_max!r}")
    baseline = inputs.n if family is BoundFamily.DATA_DEPENDENT else inputs.m
    if baseline is not None and n_max < baseline:
        raise ValueError(
            f"n_max={n_max} is below the sample size the risk was measured on "
            f"({baseline}); adjustment only scales up"
        )
    if family is BoundFamily.DATA_DEPENDENT:
        adjusted = replace(inputs, n=n_max)
    else:
        adjusted = replace(inputs, m=n_max)
    value = _FAMILY_FN[family](adjusted)
    return replace(value, n_adjusted=True)
