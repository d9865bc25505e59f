"""Order statistics of independent, non-identical exponential SNRs.

Rates (``lambda``) parameterize everything here; a user's mean SNR is
``1 / rate``.
"""

import numpy as np
from scipy import integrate

from ._validation import check_rates

LN2 = np.log(2.0)


class MaxOfExponentials:
    """Distribution of the largest of independent exponentials.

    Exposes the ``cdf``/``sf``/``logcdf``/``logsf``/``pdf`` subset of the
    scipy frozen-distribution interface, which is all the quantizers need.
    """

    def __init__(self, rates):
        self.rates = check_rates(rates)

    def __repr__(self):
        return f"MaxOfExponentials(K={self.rates.size})"

    def _per_user(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError("x must be nonnegative")
        return x, np.multiply.outer(x, self.rates)

    def logcdf(self, x):
        x, lx = self._per_user(x)
        with np.errstate(divide="ignore"):
            return np.sum(np.log1p(-np.exp(-lx)), axis=-1)

    def cdf(self, x):
        return np.exp(self.logcdf(x))

    def sf(self, x):
        return -np.expm1(self.logcdf(x))

    def logsf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.sf(x))

    def pdf(self, x):
        x, lx = self._per_user(x)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            hazard_sum = np.sum(self.rates / np.expm1(lx), axis=-1)
            out = np.exp(np.sum(np.log1p(-np.exp(-lx)), axis=-1)) * hazard_sum
        at_zero = x == 0
        if np.any(at_zero):
            out = np.where(at_zero, self.rates[0] if self.rates.size == 1 else 0.0, out)
        return out

    def upper_support(self, tail=1e-12):
        """An ``x`` with ``sf(x) <= tail``, from ``sf(x) <= K exp(-min_rate x)``."""
        return np.log(self.rates.size / tail) / self.rates.min()


def max_cdf(rates, x):
    """P(max_i X_i <= x) = prod_i (1 - exp(-rate_i x))."""
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be nonnegative")
    return MaxOfExponentials(rates).cdf(x)


def max_pdf(rates, x):
    return MaxOfExponentials(rates).pdf(x)


def exceedance_pmf(probs):
    """Poisson-binomial pmf of the number of successes, by dynamic programming.

    ``out[j]`` is the probability that exactly ``j`` of the independent
    Bernoulli(``probs[i]``) trials succeed.
    """
    pmf = np.zeros(len(probs) + 1)
    pmf[0] = 1.0
    for i, p in enumerate(probs):
        # RHS is fully evaluated before assignment, so both terms use the previous stage.
        pmf[1:i + 2] = pmf[1:i + 2] * (1.0 - p) + pmf[0:i + 1] * p
        pmf[0] *= 1.0 - p
    return pmf


def rank_distribution(cluster_rates, m, r):
    """Probability of each rank of member `m` inside its cluster given SNR `r`.

    Member `m` (0-based) has rank ``n`` (1 = strongest) when exactly ``n - 1``
    of the other members exceed `r`; member ``j`` does so with probability
    ``exp(-rate_j r)``. Entry ``n - 1`` of the returned length-L array is the
    probability of rank ``n``.
    """
    rates = check_rates(cluster_rates, name="cluster_rates")
    if not 0 <= m < rates.size:
        raise IndexError(f"member {m} out of range for cluster of size {rates.size}")
    if r < 0:
        raise ValueError("r must be nonnegative")
    others = np.delete(rates, m)
    return exceedance_pmf(np.exp(-others * r))


def rank_probability(cluster_rates, m, n, r):
    """Probability that member `m` (0-based) holds rank `n` (1-based) at SNR `r`."""
    L = np.size(cluster_rates)
    if not 1 <= n <= L:
        raise IndexError(f"rank {n} out of range for cluster of size {L}")
    return rank_distribution(cluster_rates, m, r)[n - 1]


def most_probable_rank(cluster_rates, m, r):
    """1-based argmax of :func:`rank_distribution`; ties go to the better rank."""
    return int(np.argmax(rank_distribution(cluster_rates, m, r))) + 1


def expected_max_log_rate(rates):
    """E[log2(1 + max_i X_i)] in bits/s/Hz per beam.

    Integrates ``log2(1 + x)`` against the density of the maximum on
    ``[0, x_hi]`` with ``sf(x_hi) <= 1e-12``.
    """
    dist = MaxOfExponentials(rates)
    x_hi = dist.upper_support()
    # Break at a few quantile-ish points so quad sees the bulk of the mass.
    scale = np.log(dist.rates.size + 1.0) / np.median(dist.rates)
    points = [p for p in (0.25 * scale, scale, 4 * scale) if p < x_hi]
    value, _ = integrate.quad(lambda x: np.log1p(x) * dist.pdf(x) / LN2, 0.0, x_hi,
                              points=points or None, epsabs=1e-9, epsrel=1e-10,
                              limit=400)
    return value


def best_beam_sf(rates, n_beams, x):
    """Survival function of the largest SNR reported on one beam when every
    user reports only its best of `n_beams` i.i.d. beams.

    A beam nobody picks contributes an atom at zero.
    """
    rates = check_rates(rates)
    x = np.asarray(x, dtype=float)
    lx = np.multiply.outer(x, rates)
    with np.errstate(divide="ignore"):
        # P(user's best beam exceeds x) = 1 - (1 - e^{-lx})^M
        best_exceeds = -np.expm1(n_beams * np.log1p(-np.exp(-lx)))
    return -np.expm1(np.sum(np.log1p(-best_exceeds / n_beams), axis=-1))


def expected_best_beam_log_rate(rates, n_beams):
    """E[log2(1 + S)] per beam where S is the best-beam-only scheduled SNR.

    Uses ``E[g(S)] = int_0^inf g'(x) P(S > x) dx`` with ``g(0) = 0``, which
    handles the idle-beam atom at zero. Reduces to
    :func:`expected_max_log_rate` when ``n_beams == 1``.
    """
    rates = check_rates(rates)
    x_hi = np.log(rates.size / 1e-12) / rates.min()
    scale = np.log(rates.size + 1.0) / np.median(rates)
    points = [p for p in (0.25 * scale, scale, 4 * scale) if p < x_hi]
    value, _ = integrate.quad(
        lambda x: best_beam_sf(rates, n_beams, x) / ((1.0 + x) * LN2), 0.0, x_hi,
        points=points or None, epsabs=1e-9, epsrel=1e-10, limit=400)
    return value
