"""Independent arbitrary-precision re-implementations used as test oracles.

These are written directly from the formulas with mpmath at 50 digits and
share no code with the package. Inputs are converted through mpf(float) so
the oracle sees exactly the binary values the implementation sees.
"""

from fractions import Fraction
from math import log as _float_log

from mpmath import mp, mpf, log, sqrt

mp.dps = 50


def kl_uniform_oracle(log_priors):
    k = len(log_priors)
    return -log(k) - mp.fsum(mpf(x) for x in log_priors) / k


def mcallester_oracle(emp_risk, kl, m, delta):
    return mpf(emp_risk) + sqrt((mpf(kl) + log(mpf(m) / mpf(delta))) / (2 * m))


def tolstikhin_seldin_oracle(emp_risk, kl, m, delta):
    c = (mpf(kl) + log(2 * sqrt(mpf(m)) / mpf(delta))) / m
    return mpf(emp_risk) + sqrt(2 * mpf(emp_risk) * c) + 2 * c


def expected_gap_oracle(sigma, n, m_prior, kl):
    return sqrt(2 * mpf(sigma) ** 2 / (n - m_prior) * mpf(kl))


def data_dependent_oracle(emp_risk, sigma, n, m_prior, kl, eta):
    return mpf(emp_risk) + expected_gap_oracle(sigma, n, m_prior, kl) / mpf(eta)


def rel_err(value, oracle):
    oracle = mpf(oracle)
    if oracle == 0:
        return abs(mpf(value))
    return abs((mpf(value) - oracle) / oracle)


# ---------------------------------------------------------------------------
# Brute-force character n-gram oracle (exact rational arithmetic)
# ---------------------------------------------------------------------------


def ngram_counts_oracle(corpus, order, eot):
    """Event counting written independently: explicit window slicing."""
    counts = {}
    for text in corpus:
        padded = list(text) + [eot]
        for i, sym in enumerate(padded):
            start = max(0, i - order)
            ctx = "".join(padded[start:i])
            counts[(ctx, sym)] = counts.get((ctx, sym), 0) + 1
    return counts


def ngram_loglik_oracle(corpus, order, alphabet, alpha, eot, context, target):
    """Exact smoothed log-likelihood of target (then eot) given context."""
    counts = ngram_counts_oracle(corpus, order, eot)
    v = len(alphabet)
    alpha = Fraction(alpha)  # exact value of the binary float

    def prob(ctx, sym):
        ctx = ctx[-order:]
        num = counts.get((ctx, sym), 0) + alpha
        den = sum(c for (c_ctx, _), c in counts.items() if c_ctx == ctx) + alpha * v
        return num / den

    total = Fraction(1)
    history = context
    for sym in target:
        total *= prob(history, sym)
        history += sym
    total *= prob(history, eot)
    return _float_log(total.numerator) - _float_log(total.denominator)
