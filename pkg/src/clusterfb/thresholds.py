"""Cluster partitioning, feedback thresholds and the sum-rate-loss bound.

Users are sorted by decreasing mean SNR (increasing rate) and cut into
contiguous clusters; each cluster gets one threshold above which a member's
most probable in-cluster rank is 1. The smallest threshold decides who stays
silent, and the loss that silence can cause is bounded here as well.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._roots import solve_increasing
from ._validation import check_nonnegative, check_positive_int, check_rates
from .order_stats import max_cdf, rank_distribution

THRESHOLD_VARIANTS = ("type1", "type2")


@dataclass(frozen=True)
class ClusterPlan:
    """Cluster membership and (optionally) the threshold of every cluster.

    Attributes
    ----------
    rates : ndarray of shape (K,)
        Per-user exponential rates in the caller's user order.
    clusters : tuple of ndarray
        Original user indices of each cluster, strongest cluster first.
    thresholds : ndarray of shape (n_clusters,) or None
        ``r_1 >= r_2 >= ... >= r_Nc`` once computed.
    """

    rates: np.ndarray
    clusters: tuple
    thresholds: np.ndarray = field(default=None)

    @property
    def n_clusters(self):
        return len(self.clusters)

    @property
    def sizes(self):
        return tuple(len(c) for c in self.clusters)

    @property
    def region_bits(self):
        """Bits needed to name a region: ``ceil(log2 N_c)``, 0 for one cluster."""
        return math.ceil(math.log2(self.n_clusters)) if self.n_clusters > 1 else 0

    def cluster_rates(self, i):
        return self.rates[self.clusters[i]]

    @property
    def aggregate_rates(self):
        """Average member rate of each cluster (the homogenized rate)."""
        return np.array([self.cluster_rates(i).mean() for i in range(self.n_clusters)])

    @property
    def user_cluster(self):
        out = np.empty(self.rates.size, dtype=int)
        for i, members in enumerate(self.clusters):
            out[members] = i
        return out

    @property
    def smallest_threshold(self):
        if self.thresholds is None:
            raise ValueError("thresholds have not been computed for this plan")
        return float(self.thresholds[-1])

    def with_thresholds(self, thresholds):
        thresholds = np.asarray(thresholds, dtype=float)
        if thresholds.shape != (self.n_clusters,):
            raise ValueError(f"expected {self.n_clusters} thresholds, got {thresholds.shape}")
        if np.any(thresholds < 0):
            raise ValueError("thresholds must be nonnegative")
        if np.any(np.diff(thresholds) > 1e-12 * max(1.0, thresholds.max())):
            raise ValueError("thresholds must be weakly decreasing")
        return replace(self, thresholds=thresholds)

    def to_records(self):
        """Plain rows ``(cluster, user, rate, threshold)`` for text export."""
        rows = []
        for i, members in enumerate(self.clusters):
            thr = None if self.thresholds is None else float(self.thresholds[i])
            for u in members:
                rows.append((i + 1, int(u), float(self.rates[u]), thr))
        return rows


def partition_users(rates, n_clusters):
    """Split users, sorted by decreasing mean SNR, into contiguous clusters.

    When `n_clusters` does not divide K the first ``K mod n_clusters``
    clusters take one extra user, so sizes never differ by more than one.
    """
    rates = check_rates(rates)
    n_clusters = check_positive_int(n_clusters, "n_clusters")
    K = rates.size
    if n_clusters > K:
        raise ValueError(f"n_clusters={n_clusters} exceeds the number of users K={K}")
    order = np.argsort(rates, kind="stable")
    base, extra = divmod(K, n_clusters)
    sizes = [base + (i < extra) for i in range(n_clusters)]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    clusters = tuple(order[bounds[i]:bounds[i + 1]] for i in range(n_clusters))
    return ClusterPlan(rates=rates, clusters=clusters)


def crossing_point(cluster_rates, m, n, rtol=1e-12):
    """SNR at which member `m` is equally likely to hold rank `n` and ``n + 1``.

    Below the crossing rank ``n + 1`` is more probable, above it rank ``n``.
    The difference ``P_n - P_{n+1}`` changes sign exactly once on
    ``(0, inf)``: the rank distribution is likelihood-ratio ordered in ``r``
    because every competitor's exceedance probability decreases in ``r``.
    The bracket is grown from the homogeneous guess ``ln(L) / mean_rate``
    and the root refined by bisection.
    """
    rates = check_rates(cluster_rates, name="cluster_rates")
    L = rates.size
    if L < 2:
        raise ValueError("a crossing point needs at least two cluster members")
    if not 1 <= n <= L - 1:
        raise IndexError(f"rank n={n} must lie in 1..{L - 1}")

    if n == 1:
        others = np.delete(rates, m)

        def gap(r):
            # P_1 - P_2 = P_1 * (1 - sum_j odds_j), odds_j = p_j / (1 - p_j);
            # only the sign matters and P_1 > 0 for r > 0.
            with np.errstate(over="ignore"):
                return 1.0 - np.sum(1.0 / np.expm1(others * r))
    else:
        def gap(r):
            probs = rank_distribution(rates, m, r)
            return probs[n - 1] - probs[n]

    start = math.log(L) / rates.mean()
    return solve_increasing(gap, start, rtol=rtol)


def _type1_threshold(cluster_rates):
    if cluster_rates.size < 2:
        return 0.0
    return max(crossing_point(cluster_rates, m, 1) for m in range(cluster_rates.size))


def _type2_threshold(cluster_rates):
    return math.log(cluster_rates.size) / cluster_rates.mean()


def _cluster_threshold(cluster_rates, variant):
    if variant == "type1":
        return _type1_threshold(cluster_rates)
    if variant == "type2":
        return _type2_threshold(cluster_rates)
    raise ValueError(f"variant must be one of {THRESHOLD_VARIANTS}, got {variant!r}")


def type1_thresholds(plan):
    """Per cluster, the largest member crossing point between ranks 1 and 2.

    Uses the exact heterogeneous rank probabilities; single-member clusters
    have no competitor and get threshold 0.
    """
    return np.array([_type1_threshold(plan.cluster_rates(i)) for i in range(plan.n_clusters)])


def type2_thresholds(plan):
    """``ln(L_i) / mu_i`` with ``mu_i`` the cluster's average rate and ``L_i`` its size."""
    return np.array([_type2_threshold(plan.cluster_rates(i)) for i in range(plan.n_clusters)])


def compute_thresholds(plan, variant="type2"):
    """Return `plan` with thresholds of the requested variant attached."""
    if variant == "type1":
        return plan.with_thresholds(type1_thresholds(plan))
    if variant == "type2":
        return plan.with_thresholds(type2_thresholds(plan))
    raise ValueError(f"variant must be one of {THRESHOLD_VARIANTS}, got {variant!r}")


def homogeneous_thresholds(rate, K, n_clusters):
    """Multi-threshold set ``ln(K / p) / rate`` for ``p = 1..n_clusters``."""
    if not rate > 0:
        raise ValueError("rate must be > 0")
    K = check_positive_int(K, "K")
    n_clusters = check_positive_int(n_clusters, "n_clusters")
    if n_clusters > K:
        raise ValueError(f"n_clusters={n_clusters} exceeds K={K}")
    p = np.arange(1, n_clusters + 1)
    return np.log(K / p) / rate


def loss_probability(rates, r_min):
    """Probability that every user's SNR on a beam is below `r_min`."""
    check_nonnegative(r_min, "r_min")
    return float(max_cdf(rates, r_min))


def truncated_moments(rate, r):
    """Mean and variance of ``Z = X 1{X <= r}`` for ``X ~ Exp(rate)``."""
    if not rate > 0:
        raise ValueError("rate must be > 0")
    check_nonnegative(r, "r")
    if math.isinf(r):
        return 1.0 / rate, 1.0 / rate**2
    a = rate * r
    tail = math.exp(-a)
    mean = (1.0 - tail * (1.0 + a)) / rate
    second = 2.0 / rate**2 * (1.0 - tail * (1.0 + a + 0.5 * a * a))
    return mean, max(second - mean * mean, 0.0)


def max_expectation_bound(means, variances):
    """Upper bound on E[max_i Z_i] from the means and variances alone.

    ``sum_i (mu_i + sqrt((mu_i - T)^2 + var_i)) / 2 + (2 - K) T / 2`` with
    ``T = max_j (mu_j + (K - 2) / (2 sqrt(K - 1)) sd_j)``.
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    K = means.size
    if K < 2:
        raise ValueError("the bound needs at least two variables")
    if variances.shape != means.shape:
        raise ValueError("means and variances must have the same shape")
    if np.any(variances < 0):
        raise ValueError("variances must be nonnegative")
    sd = np.sqrt(variances)
    T = np.max(means + (K - 2) / (2.0 * math.sqrt(K - 1)) * sd)
    return float(np.sum((means + np.sqrt((means - T) ** 2 + variances)) / 2.0)
                 + (2 - K) * T / 2.0)


@dataclass(frozen=True)
class RateLossBound:
    r_min: float
    loss_probability: float
    means: np.ndarray
    variances: np.ndarray
    expectation_bound: float
    per_beam: float
    n_beams: int

    @property
    def total(self):
        return self.n_beams * self.per_beam


def rate_loss_analysis(rates, r_min, n_beams):
    """All intermediate quantities of the sum-rate-loss bound for threshold `r_min`."""
    rates = check_rates(rates)
    r_min = check_nonnegative(r_min, "r_min")
    n_beams = check_positive_int(n_beams, "n_beams")
    moments = np.array([truncated_moments(lam, r_min) for lam in rates])
    means, variances = moments[:, 0], moments[:, 1]
    if rates.size == 1:
        mu_bound = float(means[0])
    else:
        mu_bound = max_expectation_bound(means, variances)
    p_loss = loss_probability(rates, r_min)
    per_beam = math.log2(1.0 + mu_bound) * p_loss
    return RateLossBound(r_min=r_min, loss_probability=p_loss, means=means,
                         variances=variances, expectation_bound=mu_bound,
                         per_beam=per_beam, n_beams=n_beams)


def rate_loss_bound(rates, r_min, n_beams):
    """Upper bound on the sum-rate loss caused by silencing users below `r_min`.

    ``n_beams * log2(1 + bound on E[max Z]) * P(max X < r_min)``.
    """
    return rate_loss_analysis(rates, r_min, n_beams).total


def smallest_threshold(rates, n_clusters, variant="type2"):
    """Threshold of the weakest cluster only; cheaper than the full set."""
    plan = partition_users(rates, n_clusters)
    return _cluster_threshold(plan.cluster_rates(plan.n_clusters - 1), variant)


def min_clusters(rates, max_loss, n_beams, variant="type2"):
    """Fewest clusters whose smallest threshold keeps the loss bound within `max_loss`.

    Scans ``N_c = 1..K`` and returns K if no cluster count qualifies.
    """
    rates = check_rates(rates)
    if not max_loss > 0:
        raise ValueError("max_loss must be > 0")
    for n_clusters in range(1, rates.size + 1):
        r_min = smallest_threshold(rates, n_clusters, variant)
        if rate_loss_bound(rates, r_min, n_beams) <= max_loss:
            return n_clusters
    return rates.size
