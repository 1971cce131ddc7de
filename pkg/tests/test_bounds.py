"""Bound formulas against frozen oracle values and invariant properties.

Frozen constants below were computed with the mpmath oracle in oracles.py at
50 digits and rounded to float64; the implementation must match them to
relative error well below the acceptance tolerance.
"""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptbound.bounds import (
    BoundFamily,
    BoundInputs,
    KlNats,
    compute_bound,
    data_dependent_bound,
    data_dependent_expected_gap,
    kl_uniform_posterior,
    mcallester_bound,
    n_adjusted_bound,
    tolstikhin_seldin_bound,
)

from oracles import (
    data_dependent_oracle,
    expected_gap_oracle,
    kl_uniform_oracle,
    mcallester_oracle,
    rel_err,
    tolstikhin_seldin_oracle,
)

# Frozen oracle values (mpmath, 50 digits -> float64).
KL_5_7 = 5.306852819440055  # kl_uniform([-5, -7])
MCA_0_0_100 = 0.1858461094424919  # mcallester(0, 0, 100, 0.1)
MCA_TBL = 0.40934195980522253  # mcallester(0.131, 17.414, 160, 0.1)
MCA_HUGE_GAP = 3.76325446232968e-06  # gap at m = 1e12, delta = 0.5
TS_0_0_160 = 0.06916648976463631  # tolstikhin_seldin(0, 0, 160, 0.1)
TS_0_0_640 = 0.019457707380408907
TS_1_0_160 = 1.3321617174107598
GAP_HALF = 0.2332782673118094  # expected_gap(0.5, 200, 40, 17.414)
GAP_ONE = 0.4665565346236188  # linear in sigma: exactly double
DD_TBL = 0.5975565346236188  # 0.131 + GAP_HALF / 0.5
DD_ROW1 = 0.9032869257991365  # 0.2 + gap(0.5, 160, 0, 39.569) / 0.5
MCA_NADJ = 0.583025614793857  # mcallester(0.2, 39.569, m->160, 0.1)
TS_NADJ = 0.611687395471121  # tolstikhin_seldin(0.131, 17.414, m->160, 0.1)

REL = 1e-12


def inputs(emp=0.0, kl=0.0, m=100, delta=0.1, warn=False, **kw):
    return BoundInputs(emp_risk=emp, kl=KlNats(kl, warn), m=m, delta=delta, **kw)


# ---------------------------------------------------------------------------
# kl_uniform_posterior
# ---------------------------------------------------------------------------


class TestKlUniformPosterior:
    def test_single_prompt_is_negated_loglik(self):
        assert kl_uniform_posterior([-10.0]).value == 10.0

    def test_reference_single_value(self):
        # Log-likelihood magnitude from the reference experiments: k = 1
        # posterior KL is exactly the negated value.
        assert kl_uniform_posterior([-17.414]).value == 17.414

    def test_two_prompts_frozen(self):
        got = kl_uniform_posterior([-5.0, -7.0]).value
        assert math.isclose(got, KL_5_7, rel_tol=REL)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            kl_uniform_posterior([])

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_non_finite_rejected(self, bad):
        with pytest.raises(ValueError, match="finite"):
            kl_uniform_posterior([-1.0, bad])

    def test_negative_result_flagged(self):
        kl = kl_uniform_posterior([2.0])  # inconsistent "log-prob" > 0
        assert kl.value == -2.0
        assert kl.negative_input_warning

    def test_nonnegative_result_not_flagged(self):
        assert not kl_uniform_posterior([-3.0]).negative_input_warning

    @given(
        st.floats(min_value=-60.0, max_value=-1e-3),
        st.integers(min_value=1, max_value=64),
    )
    def test_identical_entries_closed_form(self, lp, k):
        got = kl_uniform_posterior([lp] * k).value
        assert abs(got - (-lp - math.log(k))) < 1e-12

    @given(st.lists(st.floats(min_value=-60.0, max_value=0.0), min_size=1, max_size=8))
    def test_doubling_k_drops_log2(self, lps):
        once = kl_uniform_posterior(lps).value
        twice = kl_uniform_posterior(lps + lps).value
        assert abs((once - twice) - math.log(2.0)) < 1e-12


# ---------------------------------------------------------------------------
# Frozen-value checks per family
# ---------------------------------------------------------------------------


class TestFrozenValues:
    def test_mcallester_zero_risk(self):
        value = mcallester_bound(inputs(0.0, 0.0, 100, 0.1))
        assert math.isclose(value.bound, MCA_0_0_100, rel_tol=REL)
        assert value.gap_term == value.bound

    def test_mcallester_gap_vanishes_large_m(self):
        value = mcallester_bound(inputs(0.5, 0.0, 10**12, 0.5))
        assert math.isclose(value.gap_term, MCA_HUGE_GAP, rel_tol=REL)
        assert math.isclose(value.bound, 0.5, rel_tol=1e-5)

    def test_mcallester_reference_row(self):
        value = mcallester_bound(inputs(0.131, 17.414, 160, 0.1))
        assert math.isclose(value.bound, MCA_TBL, rel_tol=REL)

    def test_ts_zero_risk_one_over_m(self):
        value = tolstikhin_seldin_bound(inputs(0.0, 0.0, 160, 0.1))
        assert math.isclose(value.bound, TS_0_0_160, rel_tol=REL)
        # At zero empirical risk the whole bound is the 2C term: 1/m decay.
        assert math.isclose(
            value.bound, 2 * math.log(2 * math.sqrt(160) / 0.1) / 160, rel_tol=REL
        )

    def test_ts_one_over_m_decay(self):
        small = tolstikhin_seldin_bound(inputs(0.0, 0.0, 640, 0.1))
        assert math.isclose(small.bound, TS_0_0_640, rel_tol=REL)
        ratio = small.bound / TS_0_0_160
        assert 0.27 < ratio < 0.29  # ~1/m with the log(sqrt(m)) drag

    def test_ts_full_risk(self):
        value = tolstikhin_seldin_bound(inputs(1.0, 0.0, 160, 0.1))
        assert math.isclose(value.bound, TS_1_0_160, rel_tol=REL)

    def test_expected_gap_frozen(self):
        got = data_dependent_expected_gap(0.5, 200, 40, KlNats(17.414))
        assert math.isclose(got, GAP_HALF, rel_tol=REL)

    def test_expected_gap_zero_kl(self):
        assert data_dependent_expected_gap(0.5, 2, 1, KlNats(0.0)) == 0.0

    def test_expected_gap_linear_in_sigma(self):
        got = data_dependent_expected_gap(1.0, 200, 40, KlNats(17.414))
        assert math.isclose(got, GAP_ONE, rel_tol=REL)
        assert math.isclose(got, 2 * GAP_HALF, rel_tol=REL)

    def test_data_dependent_frozen(self):
        value = data_dependent_bound(
            inputs(0.131, 17.414, 160, 0.1, n=200, m_prior=40, sigma=0.5, eta=0.5)
        )
        assert math.isclose(value.bound, DD_TBL, rel_tol=REL)

    def test_data_dependent_zero(self):
        value = data_dependent_bound(
            inputs(0.0, 0.0, 10, 0.1, n=50, m_prior=5, sigma=0.7, eta=0.5)
        )
        assert value.bound == 0.0

    def test_data_dependent_row1(self):
        value = data_dependent_bound(
            inputs(0.2, 39.569, 160, 0.1, n=160, m_prior=0, sigma=0.5, eta=0.5)
        )
        assert math.isclose(value.bound, DD_ROW1, rel_tol=REL)


# ---------------------------------------------------------------------------
# n-adjusted recomputation
# ---------------------------------------------------------------------------


class TestNAdjusted:
    def test_mcallester_adjusted_frozen(self):
        base = inputs(0.2, 39.569, 40, 0.1)
        adjusted = n_adjusted_bound(base, 160, BoundFamily.MCALLESTER)
        assert math.isclose(adjusted.bound, MCA_NADJ, rel_tol=REL)
        assert adjusted.n_adjusted
        assert adjusted.inputs.m == 160
        assert adjusted.inputs.emp_risk == 0.2

    def test_identity_at_same_m(self):
        base = inputs(0.25, 3.0, 80, 0.1)
        plain = mcallester_bound(base)
        adjusted = n_adjusted_bound(base, 80, BoundFamily.MCALLESTER)
        assert adjusted.bound == plain.bound
        assert adjusted.n_adjusted and not plain.n_adjusted

    def test_ts_adjusted_frozen(self):
        base = inputs(0.131, 17.414, 40, 0.1)
        adjusted = n_adjusted_bound(base, 160, BoundFamily.TOLSTIKHIN_SELDIN)
        assert math.isclose(adjusted.bound, TS_NADJ, rel_tol=REL)

    def test_data_dependent_adjusts_n(self):
        base = inputs(0.1, 5.0, 50, 0.1, n=50, m_prior=10)
        adjusted = n_adjusted_bound(base, 200, BoundFamily.DATA_DEPENDENT)
        assert adjusted.inputs.n == 200
        assert adjusted.bound < data_dependent_bound(base).bound

    def test_invalid_n_max(self):
        base = inputs(0.2, 1.0, 40, 0.1)
        with pytest.raises(ValueError, match="positive"):
            n_adjusted_bound(base, 0, BoundFamily.MCALLESTER)
        with pytest.raises(ValueError, match="below the sample size"):
            n_adjusted_bound(base, 20, BoundFamily.MCALLESTER)


# ---------------------------------------------------------------------------
# Validation and error paths
# ---------------------------------------------------------------------------


class TestValidation:
    def test_delta_out_of_range(self):
        with pytest.raises(ValueError, match="delta"):
            inputs(0.0, 0.0, 100, 1.5)
        with pytest.raises(ValueError, match="delta"):
            inputs(0.0, 0.0, 100, 0.0)

    def test_emp_risk_out_of_range(self):
        with pytest.raises(ValueError, match="emp_risk"):
            inputs(-0.1, 0.0, 100, 0.1)
        with pytest.raises(ValueError, match="emp_risk"):
            inputs(1.1, 0.0, 100, 0.1)

    def test_m_prior_must_be_below_n(self):
        with pytest.raises(ValueError, match="prior subset"):
            inputs(0.1, 0.0, 100, 0.1, n=40, m_prior=40)

    def test_kl_must_be_finite(self):
        with pytest.raises(ValueError, match="finite"):
            KlNats(math.inf)

    def test_negative_kl_tolerated_until_radicand(self):
        # Mildly negative KL: log(m/delta) absorbs it, bound still computes.
        value = mcallester_bound(inputs(0.1, -1.0, 100, 0.1, warn=True))
        assert value.bound > 0.1
        # Strongly negative KL: radicand below zero must be rejected.
        with pytest.raises(ValueError, match="radicand"):
            mcallester_bound(inputs(0.1, -100.0, 100, 0.1, warn=True))
        with pytest.raises(ValueError, match="complexity"):
            tolstikhin_seldin_bound(inputs(0.1, -100.0, 100, 0.1, warn=True))

    def test_expected_gap_rejects_negative_kl(self):
        with pytest.raises(ValueError, match="nonnegative"):
            data_dependent_expected_gap(0.5, 100, 10, KlNats(-0.5, True))

    def test_expected_gap_rejects_bad_split(self):
        with pytest.raises(ValueError, match="prior subset"):
            data_dependent_expected_gap(0.5, 10, 10, KlNats(1.0))

    def test_data_dependent_needs_n(self):
        with pytest.raises(ValueError, match="sample size n"):
            data_dependent_bound(inputs(0.1, 1.0, 100, 0.1))


# ---------------------------------------------------------------------------
# Invariants & properties
# ---------------------------------------------------------------------------

risk_st = st.floats(min_value=0.0, max_value=1.0)
kl_st = st.floats(min_value=0.0, max_value=80.0)
# McAllester's complexity term is non-monotone in m below m = 3 when the KL
# is tiny (log(m/delta) alone can grow faster than 2m); the decay property is
# asserted on m >= 3 where it holds for every delta in (0, 1).
m_st = st.integers(min_value=3, max_value=10**6)
delta_st = st.floats(min_value=1e-4, max_value=0.999)
sigma_st = st.floats(min_value=0.05, max_value=3.0)
eta_st = st.floats(min_value=0.05, max_value=0.95)


@st.composite
def classical_inputs(draw):
    return inputs(draw(risk_st), draw(kl_st), draw(m_st), draw(delta_st))


@settings(max_examples=200)
@given(classical_inputs(), st.floats(min_value=1e-6, max_value=20.0))
def test_monotone_in_kl(base, bump):
    for fn in (mcallester_bound, tolstikhin_seldin_bound):
        lo = fn(base)
        hi = fn(inputs(base.emp_risk, base.kl.value + bump, base.m, base.delta))
        assert hi.bound > lo.bound


@settings(max_examples=200)
@given(classical_inputs())
def test_monotone_in_emp_risk_and_m_and_delta(base):
    for fn in (mcallester_bound, tolstikhin_seldin_bound):
        value = fn(base)
        if base.emp_risk <= 0.9:
            bumped = fn(inputs(base.emp_risk + 0.05, base.kl.value, base.m, base.delta))
            assert bumped.bound > value.bound
        more_data = fn(inputs(base.emp_risk, base.kl.value, base.m * 2, base.delta))
        assert more_data.bound < value.bound
        stricter = fn(inputs(base.emp_risk, base.kl.value, base.m, base.delta / 2))
        assert stricter.bound > value.bound


@settings(max_examples=200)
@given(classical_inputs())
def test_gap_term_nonnegative_and_consistent(base):
    for family in (BoundFamily.MCALLESTER, BoundFamily.TOLSTIKHIN_SELDIN):
        value = compute_bound(base, family)
        assert value.gap_term >= 0.0
        assert value.bound >= base.emp_risk  # IEEE addition is monotone
        assert math.isclose(
            value.bound - base.emp_risk, value.gap_term, rel_tol=1e-12, abs_tol=1e-15
        )


@settings(max_examples=200)
@given(
    risk_st,
    st.floats(min_value=1e-6, max_value=80.0),
    sigma_st,
    eta_st,
    st.integers(min_value=2, max_value=5000),
    st.integers(min_value=0, max_value=100),
)
def test_data_dependent_monotonicity(emp, kl, sigma, eta, n_gap, m_prior):
    n = m_prior + n_gap
    base = inputs(emp, kl, max(1, n), 0.1, n=n, m_prior=m_prior, sigma=sigma, eta=eta)
    value = data_dependent_bound(base)
    assert value.bound >= emp
    wider = data_dependent_bound(
        inputs(emp, kl, max(1, n), 0.1, n=n + 50, m_prior=m_prior, sigma=sigma, eta=eta)
    )
    assert wider.bound < value.bound  # shrinks as n - m_prior grows
    hotter = data_dependent_bound(
        inputs(emp, kl * 2, max(1, n), 0.1, n=n, m_prior=m_prior, sigma=sigma, eta=eta)
    )
    assert hotter.bound > value.bound


@settings(max_examples=200)
@given(
    sigma_st,
    st.floats(min_value=1e-6, max_value=80.0),
    st.integers(min_value=1, max_value=10**4),
    st.integers(min_value=0, max_value=10**3),
)
def test_expected_gap_scaling(sigma, kl, n_gap, m_prior):
    n = m_prior + n_gap
    gap = data_dependent_expected_gap(sigma, n, m_prior, KlNats(kl))
    normalized = gap * math.sqrt(n - m_prior)
    reference = math.sqrt(2.0 * sigma * sigma * kl)
    assert abs(normalized - reference) <= 1e-12 * max(1.0, reference)


def test_purity_bit_identical():
    base = inputs(0.37, 12.5, 123, 0.07, n=200, m_prior=20, sigma=0.4, eta=0.3)
    for fn in (mcallester_bound, tolstikhin_seldin_bound, data_dependent_bound):
        first = [fn(base).bound for _ in range(5)]
        assert len(set(first)) == 1


# ---------------------------------------------------------------------------
# Randomized oracle equivalence (the formula-fidelity gate lives in
# test_acceptance.py; this is the same machinery at a smaller sample size so
# failures localize here first)
# ---------------------------------------------------------------------------


def random_valid_inputs(rng):
    emp = rng.random()
    kl = rng.uniform(1e-3, 60.0)
    m = rng.randint(1, 10**6)
    delta = rng.uniform(1e-3, 0.999)
    m_prior = rng.randint(0, 500)
    n = m_prior + rng.randint(1, 5000)
    sigma = rng.uniform(0.05, 2.0)
    eta = rng.uniform(0.05, 0.95)
    return emp, kl, m, delta, n, m_prior, sigma, eta


def test_oracle_equivalence_sample():
    rng = random.Random(1234)
    for _ in range(100):
        emp, kl, m, delta, n, m_prior, sigma, eta = random_valid_inputs(rng)
        base = inputs(emp, kl, m, delta, n=n, m_prior=m_prior, sigma=sigma, eta=eta)
        assert rel_err(mcallester_bound(base).bound,
                       mcallester_oracle(emp, kl, m, delta)) < 1e-10
        assert rel_err(tolstikhin_seldin_bound(base).bound,
                       tolstikhin_seldin_oracle(emp, kl, m, delta)) < 1e-10
        assert rel_err(data_dependent_bound(base).bound,
                       data_dependent_oracle(emp, sigma, n, m_prior, kl, eta)) < 1e-10
        assert rel_err(
            data_dependent_expected_gap(sigma, n, m_prior, KlNats(kl)),
            expected_gap_oracle(sigma, n, m_prior, kl),
        ) < 1e-10
        lps = [-rng.uniform(0.0, 50.0) for _ in range(rng.randint(1, 8))]
        assert rel_err(kl_uniform_posterior(lps).value, kl_uniform_oracle(lps)) < 1e-10
